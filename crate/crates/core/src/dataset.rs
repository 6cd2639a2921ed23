//! Distillation dataset: teacher rollouts over generated episodes, the PDDS
//! binary record format, and the run manifest.
//!
//! A record holds one frame-group's full 3-hero observation block plus the
//! supervised hero's masks, raw teacher logits and value. The supervised hero
//! rotates per episode (episode e supervises hero e mod 3), so record counts
//! stay multiples of the 16-frame episode length.

use crate::env::{
    derive_masks, make_schema, MaskSet, ObservationSchema, EPISODE_LEN,
    HEROES_PER_TEAM, MASK_PACKED_BYTES,
};
use crate::error::{Error, Result};
use crate::teacher::{teacher_forward, TeacherNet};
use crate::util::{run_sharded, splitmix64, Fnv1a};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const DATASET_MAGIC: &[u8; 4] = b"PDDS";
pub const DATASET_VERSION: u32 = 1;
pub const LOGITS_LEN: usize = 13 + 25 + 42 + 42 + 39;
const VAL_SALT: u64 = 0x76a1_5a17;

#[derive(Debug, Clone)]
pub struct DatasetRecord {
    pub hero_index: u8,
    pub episode_pos: u8,
    /// full 3-hero observation block, hero-major
    pub obs: Vec<f32>,
    pub masks: MaskSet,
    /// raw teacher logits: button, move, ox, oz, target
    pub logits: Vec<f32>,
    pub value: f32,
}

impl DatasetRecord {
    pub fn head_logits(&self) -> [&[f32]; 5] {
        [
            &self.logits[0..13],
            &self.logits[13..38],
            &self.logits[38..80],
            &self.logits[80..122],
            &self.logits[122..161],
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: ObservationSchema,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Shallow subset view (clones records; used by reduced-budget runs).
    pub fn take(&self, n: usize) -> Dataset {
        Dataset { schema: self.schema.clone(), records: self.records[..n.min(self.records.len())].to_vec() }
    }
}

/// Builds the in-memory records for `n` frame-groups starting at episode 0.
pub fn generate_records(net: &TeacherNet, schema: &ObservationSchema, seed: u64, n: usize) -> Result<Dataset> {
    if n % EPISODE_LEN != 0 {
        return Err(Error::InvalidArgument(format!(
            "record count {n} must be a multiple of the episode length {EPISODE_LEN}"
        )));
    }
    let episodes = n / EPISODE_LEN;
    let generator = crate::env::FrameGenerator::new(schema, seed)?;
    let results: Vec<Result<Vec<DatasetRecord>>> = run_sharded(episodes, |range| {
        range
            .map(|e| {
                let frames = generator.episode(e as u64, EPISODE_LEN);
                let outs = teacher_forward(net, &frames)?;
                let hero = (e % HEROES_PER_TEAM) as u8;
                let mut recs = Vec::with_capacity(EPISODE_LEN);
                for (t, group) in frames.iter().enumerate() {
                    let masks = derive_masks(group, schema);
                    let hl = &outs[t][hero as usize];
                    recs.push(DatasetRecord {
                        hero_index: hero,
                        episode_pos: t as u8,
                        obs: group.data.clone(),
                        masks: masks[hero as usize].clone(),
                        logits: hl.flat(),
                        value: hl.value,
                    });
                }
                Ok(recs)
            })
            .collect()
    });
    let mut records = Vec::with_capacity(n);
    for r in results {
        records.extend(r?);
    }
    Ok(Dataset { schema: schema.clone(), records })
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f32s(buf: &mut Vec<u8>, vs: &[f32]) {
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a dataset into PDDS bytes (little-endian).
pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let s = &ds.schema;
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    push_u32(&mut buf, DATASET_VERSION);
    push_u32(&mut buf, ds.records.len() as u32);
    buf.extend_from_slice(&s.scale.to_le_bytes());
    let extents = [
        HEROES_PER_TEAM as u32,
        s.image.0 as u32,
        s.image.1 as u32,
        s.image.2 as u32,
        s.heroes.0 as u32,
        s.heroes.1 as u32,
        s.current_hero as u32,
        s.soldiers.0 as u32,
        s.soldiers.1 as u32,
        s.turrets.0 as u32,
        s.turrets.1 as u32,
        s.monsters.0 as u32,
        s.monsters.1 as u32,
        s.whole_info as u32,
    ];
    push_u32(&mut buf, extents.len() as u32);
    for e in extents {
        push_u32(&mut buf, e);
    }
    for r in &ds.records {
        buf.push(r.hero_index);
        buf.push(r.episode_pos);
        push_f32s(&mut buf, &r.obs);
        buf.extend_from_slice(&r.masks.pack());
        push_f32s(&mut buf, &r.logits);
        buf.extend_from_slice(&r.value.to_le_bytes());
    }
    buf
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("dataset file truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(4 * n)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_dataset(buf: &[u8]) -> Result<Dataset> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != DATASET_MAGIC {
        return Err(Error::Format("bad dataset magic".into()));
    }
    let version = c.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let count = c.u32()? as usize;
    let scale = c.f64()?;
    let n_extents = c.u32()? as usize;
    if n_extents != 14 {
        return Err(Error::Format(format!("unexpected extents block length {n_extents}")));
    }
    let mut e = [0u32; 14];
    for v in e.iter_mut() {
        *v = c.u32()?;
    }
    if e[0] as usize != HEROES_PER_TEAM {
        return Err(Error::Format("heroes-per-group mismatch".into()));
    }
    let schema = ObservationSchema {
        scale,
        image: (e[1] as usize, e[2] as usize, e[3] as usize),
        heroes: (e[4] as usize, e[5] as usize),
        current_hero: e[6] as usize,
        soldiers: (e[7] as usize, e[8] as usize),
        turrets: (e[9] as usize, e[10] as usize),
        monsters: (e[11] as usize, e[12] as usize),
        whole_info: e[13] as usize,
    };
    // cross-check the extents against the scale rule
    let expect = make_schema(scale)?;
    if expect != schema {
        return Err(Error::Format("extents do not match the stored scale".into()));
    }
    let group_total = schema.group_total();
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let hero_index = c.take(1)?[0];
        let episode_pos = c.take(1)?[0];
        let obs = c.f32s(group_total)?;
        let masks = MaskSet::unpack(c.take(MASK_PACKED_BYTES)?)
            .ok_or_else(|| Error::Format("mask block truncated".into()))?;
        let logits = c.f32s(LOGITS_LEN)?;
        let value = f32::from_le_bytes(c.take(4)?.try_into().unwrap());
        records.push(DatasetRecord { hero_index, episode_pos, obs, masks, logits, value });
    }
    if c.pos != buf.len() {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    Ok(Dataset { schema, records })
}

#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub train: PathBuf,
    pub val: PathBuf,
    pub manifest: PathBuf,
}

/// Writes train/val PDDS files plus a key=value manifest with content digests.
pub fn generate_dataset(
    net: &TeacherNet,
    schema: &ObservationSchema,
    seed: u64,
    n_train: usize,
    n_val: usize,
    dir: &Path,
) -> Result<DatasetPaths> {
    if n_train % EPISODE_LEN != 0 || n_val % EPISODE_LEN != 0 {
        return Err(Error::InvalidArgument(format!(
            "n_train ({n_train}) and n_val ({n_val}) must be multiples of {EPISODE_LEN}"
        )));
    }
    std::fs::create_dir_all(dir)?;
    let train = generate_records(net, schema, seed, n_train)?;
    let val_seed = splitmix64(seed ^ VAL_SALT);
    let val = generate_records(net, schema, val_seed, n_val)?;
    let paths = DatasetPaths {
        train: dir.join("train.pdds"),
        val: dir.join("val.pdds"),
        manifest: dir.join("manifest.txt"),
    };
    let train_bytes = encode_dataset(&train);
    let val_bytes = encode_dataset(&val);
    let mut digest = Fnv1a::new();
    digest.update(&train_bytes);
    digest.update(&val_bytes);
    std::fs::File::create(&paths.train)?.write_all(&train_bytes)?;
    std::fs::File::create(&paths.val)?.write_all(&val_bytes)?;
    let manifest = format!(
        "format=PDDS\nversion={DATASET_VERSION}\nn_train={n_train}\nn_val={n_val}\nscale={}\nseed={seed}\nval_seed={val_seed}\nteacher_seed={}\nper_hero_total={}\ncontent_digest={:016x}\n",
        schema.scale,
        net.seed,
        schema.per_hero_total(),
        digest.finish(),
    );
    std::fs::write(&paths.manifest, manifest)?;
    Ok(paths)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_dataset(&buf)
}

/// Parses a UTF-8 key=value manifest (`#` comments allowed).
pub fn parse_manifest(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teacher::build_teacher;

    fn tiny() -> (ObservationSchema, TeacherNet) {
        let schema = make_schema(0.08).unwrap();
        let net = build_teacher(&schema, 5).unwrap();
        (schema, net)
    }

    #[test]
    fn roundtrip_and_determinism() {
        let (schema, net) = tiny();
        let a = generate_records(&net, &schema, 77, 32).unwrap();
        let b = generate_records(&net, &schema, 77, 32).unwrap();
        let ba = encode_dataset(&a);
        let bb = encode_dataset(&b);
        assert_eq!(ba, bb, "same seed must give bit-identical bytes");
        let back = decode_dataset(&ba).unwrap();
        assert_eq!(back.len(), 32);
        assert_eq!(back.schema, schema);
        assert_eq!(back.records[7].logits, a.records[7].logits);
        assert_eq!(back.records[7].masks, a.records[7].masks);
    }

    #[test]
    fn non_multiple_of_16_rejected() {
        let (schema, net) = tiny();
        assert!(generate_records(&net, &schema, 1, 20).is_err());
        let dir = std::env::temp_dir().join("pdds_reject_test");
        assert!(generate_dataset(&net, &schema, 1, 24, 16, &dir).is_err());
    }

    #[test]
    fn hero_rotates_per_episode() {
        let (schema, net) = tiny();
        let ds = generate_records(&net, &schema, 3, 64).unwrap();
        assert_eq!(ds.records[0].hero_index, 0);
        assert_eq!(ds.records[16].hero_index, 1);
        assert_eq!(ds.records[32].hero_index, 2);
        assert_eq!(ds.records[48].hero_index, 0);
        for (i, r) in ds.records.iter().enumerate() {
            assert_eq!(r.episode_pos as usize, i % EPISODE_LEN);
        }
    }

    #[test]
    fn files_and_manifest() {
        let (schema, net) = tiny();
        let dir = std::env::temp_dir().join(format!("pdds_files_{}", std::process::id()));
        let paths = generate_dataset(&net, &schema, 21, 32, 16, &dir).unwrap();
        let train = load_dataset(&paths.train).unwrap();
        let val = load_dataset(&paths.val).unwrap();
        assert_eq!(train.len(), 32);
        assert_eq!(val.len(), 16);
        let manifest = std::fs::read_to_string(&paths.manifest).unwrap();
        let kv = parse_manifest(&manifest);
        let get = |k: &str| kv.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone()).unwrap();
        assert_eq!(get("n_train"), "32");
        assert_eq!(get("format"), "PDDS");
        // regenerating reproduces the digest
        let paths2 = generate_dataset(&net, &schema, 21, 32, 16, &dir.join("again")).unwrap();
        let manifest2 = std::fs::read_to_string(&paths2.manifest).unwrap();
        let kv2 = parse_manifest(&manifest2);
        let get2 = |k: &str| kv2.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone()).unwrap();
        assert_eq!(get("content_digest"), get2("content_digest"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn corrupted_dataset_rejected() {
        let (schema, net) = tiny();
        let ds = generate_records(&net, &schema, 9, 16).unwrap();
        let mut bytes = encode_dataset(&ds);
        bytes.truncate(bytes.len() - 3);
        assert!(decode_dataset(&bytes).is_err());
        let mut bad_magic = encode_dataset(&ds);
        bad_magic[0] = b'X';
        assert!(decode_dataset(&bad_magic).is_err());
    }
}
