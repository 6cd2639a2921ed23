//! Synthetic observation generator.
//!
//! Features follow a smooth correlated process: a per-episode mixture
//! component plus an AR(1) latent trajectory per hero, projected through
//! static seeded maps and squashed by tanh. Legality bits are thresholded
//! functionals of the same latent, embedded into designated coordinates, so
//! derived masks correlate with the visible features and every frame is
//! self-contained.

use super::schema::{ObservationSchema, EPISODE_LEN, HEROES_PER_TEAM};
use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One 3-hero time step, stored flat: hero-major, category order
/// [image, heroes, current, soldiers, turrets, monsters, whole].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGroup {
    pub data: Vec<f32>,
}

impl FrameGroup {
    pub fn hero<'a>(&'a self, schema: &ObservationSchema, h: usize) -> &'a [f32] {
        let n = schema.per_hero_total();
        &self.data[h * n..(h + 1) * n]
    }
}

pub const LATENT_RANK: usize = 12;
const RHO: f64 = 0.92;
const MIXTURE_K: usize = 4;
const MIXTURE_SCALE: f64 = 0.9;
const STATIC_SEED: u64 = 0x7064_646c_5f67_656e;

/// Where the legality bits live inside a hero's observation:
/// coordinate 0 of every unit feature row is that unit's visibility bit;
/// button availability bit `b` sits in hero row (b mod 6), coordinate
/// 1 + b/6. Requires a hero feature dim of at least 4.
pub const UNIT_VISIBILITY_COORD: usize = 0;

pub fn button_bit_location(b: usize) -> (usize, usize) {
    (b % 6, 1 + b / 6)
}

#[inline]
fn randn(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one sample per call keeps the stream simple and reproducible.
    loop {
        let u1: f64 = rng.random();
        if u1 > 1e-300 {
            let u2: f64 = rng.random();
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<f64> {
    (0..rows * cols).map(|_| randn(rng) * scale).collect()
}

/// Static projection maps shared by every episode; derived from a fixed seed
/// plus the schema extents, so any two runs over the same schema agree.
struct StaticMaps {
    img: Vec<f64>,
    heroes_a: Vec<f64>,
    heroes_o: Vec<f64>,
    current_a: Vec<f64>,
    soldiers_a: Vec<f64>,
    soldiers_o: Vec<f64>,
    turrets_a: Vec<f64>,
    turrets_o: Vec<f64>,
    monsters_a: Vec<f64>,
    monsters_o: Vec<f64>,
    whole_a: Vec<f64>,
    button_w: Vec<f64>,
    button_c: Vec<f64>,
    vis_hero_w: Vec<f64>,
    vis_monster_w: Vec<f64>,
    vis_soldier_w: Vec<f64>,
    vis_turret_w: Vec<f64>,
    mix_mu: Vec<f64>,
}

impl StaticMaps {
    fn build(schema: &ObservationSchema) -> Self {
        let r = LATENT_RANK;
        let mut rng = ChaCha8Rng::seed_from_u64(STATIC_SEED);
        let proj = 1.2;
        let hd = schema.heroes.1;
        let sd = schema.soldiers.1;
        let td = schema.turrets.1;
        let md = schema.monsters.1;
        // Visibility directions are unit-normalized so thresholds are in
        // standard-normal units.
        let unit_rows = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            let mut m = rand_matrix(rng, n, r, 1.0);
            for row in m.chunks_mut(r) {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                row.iter_mut().for_each(|v| *v /= norm);
            }
            m
        };
        let img = rand_matrix(&mut rng, schema.image_len(), r, proj);
        let heroes_a = rand_matrix(&mut rng, hd, r, proj);
        let heroes_o = rand_matrix(&mut rng, schema.heroes.0, hd, 0.6);
        let current_a = rand_matrix(&mut rng, schema.current_hero, r, proj);
        let soldiers_a = rand_matrix(&mut rng, sd, r, proj);
        let soldiers_o = rand_matrix(&mut rng, schema.soldiers.0, sd, 0.6);
        let turrets_a = rand_matrix(&mut rng, td, r, proj);
        let turrets_o = rand_matrix(&mut rng, schema.turrets.0, td, 0.6);
        let monsters_a = rand_matrix(&mut rng, md, r, proj);
        let monsters_o = rand_matrix(&mut rng, schema.monsters.0, md, 0.6);
        let whole_a = rand_matrix(&mut rng, schema.whole_info, r, proj);
        let button_w = unit_rows(&mut rng, super::actions::BUTTON_DIM);
        // Offsets give each button a base availability rate in roughly
        // [0.6, 0.85]; tuned once so every button is legal in well over 1%
        // of frames while masks still vary with the latent state.
        let button_c: Vec<f64> = (0..super::actions::BUTTON_DIM).map(|b| 0.25 + 0.06 * b as f64).collect();
        let vis_hero_w = unit_rows(&mut rng, schema.heroes.0);
        let vis_monster_w = unit_rows(&mut rng, schema.monsters.0);
        let vis_soldier_w = unit_rows(&mut rng, schema.soldiers.0);
        let vis_turret_w = unit_rows(&mut rng, schema.turrets.0);
        let mix_mu = rand_matrix(&mut rng, MIXTURE_K, r, MIXTURE_SCALE);
        Self {
            img,
            heroes_a,
            heroes_o,
            current_a,
            soldiers_a,
            soldiers_o,
            turrets_a,
            turrets_o,
            monsters_a,
            monsters_o,
            whole_a,
            button_w,
            button_c,
            vis_hero_w,
            vis_monster_w,
            vis_soldier_w,
            vis_turret_w,
            mix_mu,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(episode.wrapping_add(1))))
}

/// Projects `z` through `a` ([fd, r]) plus a per-unit offset, writing
/// tanh-squashed values.
fn project_unit(a: &[f64], offset: Option<&[f64]>, z: &[f64], out: &mut [f32]) {
    let r = z.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = offset.map_or(0.0, |off| off[i]);
        let row = &a[i * r..(i + 1) * r];
        for (w, zz) in row.iter().zip(z) {
            acc += w * zz;
        }
        *o = acc.tanh() as f32;
    }
}

fn bit(w_row: &[f64], z: &[f64], threshold: f64) -> bool {
    let dot: f64 = w_row.iter().zip(z).map(|(a, b)| a * b).sum();
    dot + threshold > 0.0
}

/// Reusable generator handle: builds the static projection maps once.
pub struct FrameGenerator {
    schema: ObservationSchema,
    seed: u64,
    maps: StaticMaps,
}

impl FrameGenerator {
    pub fn new(schema: &ObservationSchema, seed: u64) -> Result<Self> {
        if schema.heroes.1 < 4 {
            return Err(Error::InvalidArgument(
                "frame generation needs hero feature dim >= 4 to hold button availability bits".into(),
            ));
        }
        Ok(Self { schema: schema.clone(), seed, maps: StaticMaps::build(schema) })
    }

    /// Frames of one episode segment (up to 16). Episodes are independently
    /// seeded, so any sharding over episode indices is reproducible.
    pub fn episode(&self, index: u64, len: usize) -> Vec<FrameGroup> {
        let mut out = Vec::with_capacity(len);
        generate_episode(&self.schema, &self.maps, self.seed, index, len.min(EPISODE_LEN), &mut out);
        out
    }
}

/// Deterministic frame generation. Consecutive runs of 16 groups form one
/// episode segment; the teacher resets its LSTM state at segment boundaries.
pub fn generate_frames(schema: &ObservationSchema, seed: u64, n: usize) -> Result<Vec<FrameGroup>> {
    if n < 1 {
        return Err(Error::InvalidArgument("generate_frames: n must be >= 1".into()));
    }
    let generator = FrameGenerator::new(schema, seed)?;
    let episodes = n.div_ceil(EPISODE_LEN);
    let mut out = Vec::with_capacity(n);
    for e in 0..episodes {
        let frames_left = n - e * EPISODE_LEN;
        let len = frames_left.min(EPISODE_LEN);
        out.extend(generator.episode(e as u64, len));
    }
    Ok(out)
}

fn generate_episode(
    schema: &ObservationSchema,
    maps: &StaticMaps,
    seed: u64,
    episode: u64,
    len: usize,
    out: &mut Vec<FrameGroup>,
) {
    let r = LATENT_RANK;
    let mut rng = episode_rng(seed, episode);
    let mix = rng.random_range(0..MIXTURE_K);
    let mu = &maps.mix_mu[mix * r..(mix + 1) * r];

    let mut z_team: Vec<f64> = (0..r).map(|i| mu[i] + 0.7 * randn(&mut rng)).collect();
    let mut z_hero: Vec<Vec<f64>> = (0..HEROES_PER_TEAM)
        .map(|_| (0..r).map(|i| mu[i] + 0.7 * randn(&mut rng)).collect())
        .collect();

    let innov = (1.0 - RHO * RHO).sqrt();
    let offs = schema.offsets();
    let per_hero = schema.per_hero_total();

    for _t in 0..len {
        // advance latents
        for zi in z_team.iter_mut() {
            *zi = RHO * *zi + innov * randn(&mut rng);
        }
        for zh in z_hero.iter_mut() {
            for (i, zi) in zh.iter_mut().enumerate() {
                *zi = RHO * *zi + innov * (0.5 * randn(&mut rng) + 0.5 * (z_team[i] - *zi) * 0.2 + 0.4330127018922193 * randn(&mut rng));
            }
        }
        let mut data = vec![0.0f32; HEROES_PER_TEAM * per_hero];
        for h in 0..HEROES_PER_TEAM {
            let z = &z_hero[h];
            let frame = &mut data[h * per_hero..(h + 1) * per_hero];
            project_unit(&maps.img, None, z, &mut frame[offs.image..offs.image + schema.image_len()]);
            let hd = schema.heroes.1;
            for u in 0..schema.heroes.0 {
                let dst = &mut frame[offs.heroes + u * hd..offs.heroes + (u + 1) * hd];
                project_unit(&maps.heroes_a, Some(&maps.heroes_o[u * hd..(u + 1) * hd]), z, dst);
            }
            project_unit(&maps.current_a, None, z, &mut frame[offs.current..offs.current + schema.current_hero]);
            let sd = schema.soldiers.1;
            for u in 0..schema.soldiers.0 {
                let dst = &mut frame[offs.soldiers + u * sd..offs.soldiers + (u + 1) * sd];
                project_unit(&maps.soldiers_a, Some(&maps.soldiers_o[u * sd..(u + 1) * sd]), z, dst);
            }
            let td = schema.turrets.1;
            for u in 0..schema.turrets.0 {
                let dst = &mut frame[offs.turrets + u * td..offs.turrets + (u + 1) * td];
                project_unit(&maps.turrets_a, Some(&maps.turrets_o[u * td..(u + 1) * td]), z, dst);
            }
            let md = schema.monsters.1;
            for u in 0..schema.monsters.0 {
                let dst = &mut frame[offs.monsters + u * md..offs.monsters + (u + 1) * md];
                project_unit(&maps.monsters_a, Some(&maps.monsters_o[u * md..(u + 1) * md]), z, dst);
            }
            project_unit(&maps.whole_a, None, &z_team, &mut frame[offs.whole..offs.whole + schema.whole_info]);

            // visibility bits: coordinate 0 of every unit row
            for u in 0..schema.heroes.0 {
                let visible = if u == h { true } else { bit(&maps.vis_hero_w[u * r..(u + 1) * r], z, 0.8) };
                frame[offs.heroes + u * hd + UNIT_VISIBILITY_COORD] = visible as u8 as f32;
            }
            for u in 0..schema.monsters.0 {
                let visible = bit(&maps.vis_monster_w[u * r..(u + 1) * r], z, 0.5);
                frame[offs.monsters + u * md + UNIT_VISIBILITY_COORD] = visible as u8 as f32;
            }
            for u in 0..schema.soldiers.0 {
                let visible = bit(&maps.vis_soldier_w[u * r..(u + 1) * r], z, 0.5);
                frame[offs.soldiers + u * sd + UNIT_VISIBILITY_COORD] = visible as u8 as f32;
            }
            for u in 0..schema.turrets.0 {
                let visible = bit(&maps.vis_turret_w[u * r..(u + 1) * r], z, 0.6);
                frame[offs.turrets + u * td + UNIT_VISIBILITY_COORD] = visible as u8 as f32;
            }
            // button availability bits spread across hero rows
            for b in 0..super::actions::BUTTON_DIM {
                let avail = b == 0 || bit(&maps.button_w[b * r..(b + 1) * r], z, maps.button_c[b]);
                let (row, coord) = button_bit_location(b);
                frame[offs.heroes + row * hd + coord] = avail as u8 as f32;
            }
        }
        out.push(FrameGroup { data });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_schema;

    #[test]
    fn deterministic_bit_identical() {
        let schema = make_schema(0.1).unwrap();
        let a = generate_frames(&schema, 42, 48).unwrap();
        let b = generate_frames(&schema, 42, 48).unwrap();
        assert_eq!(a.len(), 48);
        assert_eq!(a, b);
        let c = generate_frames(&schema, 43, 48).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn one_episode_is_sixteen_frames() {
        let schema = make_schema(0.1).unwrap();
        let frames = generate_frames(&schema, 7, 16).unwrap();
        assert_eq!(frames.len(), EPISODE_LEN);
    }

    #[test]
    fn values_in_range_and_bits_binary() {
        let schema = make_schema(0.2).unwrap();
        let frames = generate_frames(&schema, 9, 32).unwrap();
        let offs = schema.offsets();
        for g in &frames {
            for v in &g.data {
                assert!(*v >= -1.0 && *v <= 1.0, "feature {v} out of range");
            }
            for h in 0..HEROES_PER_TEAM {
                let f = g.hero(&schema, h);
                for u in 0..schema.heroes.0 {
                    let v = f[offs.heroes + u * schema.heroes.1 + UNIT_VISIBILITY_COORD];
                    assert!(v == 0.0 || v == 1.0);
                }
                for b in 0..super::super::actions::BUTTON_DIM {
                    let (row, coord) = button_bit_location(b);
                    let v = f[offs.heroes + row * schema.heroes.1 + coord];
                    assert!(v == 0.0 || v == 1.0);
                }
            }
        }
    }

    #[test]
    fn every_button_legal_somewhere() {
        // over many frames every button index must be legal in >= 1% of them
        let schema = make_schema(0.1).unwrap();
        let frames = generate_frames(&schema, 1, 2048).unwrap();
        let offs = schema.offsets();
        let mut counts = [0usize; super::super::actions::BUTTON_DIM];
        for g in &frames {
            for h in 0..HEROES_PER_TEAM {
                let f = g.hero(&schema, h);
                for (b, c) in counts.iter_mut().enumerate() {
                    let (row, coord) = button_bit_location(b);
                    if f[offs.heroes + row * schema.heroes.1 + coord] > 0.5 {
                        *c += 1;
                    }
                }
            }
        }
        let total = (frames.len() * HEROES_PER_TEAM) as f64;
        for (b, c) in counts.iter().enumerate() {
            let rate = *c as f64 / total;
            assert!(rate >= 0.01, "button {b} legal only {rate:.4} of frames");
        }
    }
}
