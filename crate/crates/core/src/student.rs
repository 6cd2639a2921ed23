//! Student architecture family: design points from the search space, network
//! materialization, and the batched forward/backward used for distillation.
//!
//! The student has no LSTM and no attention trunk. Per hero: conv + pointwise
//! image MLP with spatial max-pool, shared per-category token embedders with
//! set-max-pooling, role transforms on hero tokens, a concat fusion MLP, a
//! 3:1 private/public split with a cross-hero max-fusion gate, an optional
//! communicate MLP, four action-fc prediction heads, and a dot-product target
//! head scoring 39 target-unit token embeddings against a query.

use crate::env::{
    CategoryOffsets, ObservationSchema, BUTTON_DIM, HEROES_PER_TEAM, MOVE_DIM, OFFSET_DIM,
    TARGET_DIM,
};
use crate::error::{Error, Result};
use crate::mat::{dense_backward_input, dense_backward_params, dense_forward_into, Mat, Real};
use crate::nn::{relu_backward_inplace, relu_inplace, BlockId, ConvShape, Init, ParamSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TD_RANGE: (usize, usize) = (32, 224);
const AD_RANGE: (usize, usize) = (32, 128);
const ROLE_CAPS: [usize; 2] = [256, 256];
const IMG_CAPS: [usize; 2] = [1024, 512];
const CAT_CAPS: [usize; 5] = [4096, 2048, 1024, 1024, 512];
const COMM_CAPS: [usize; 3] = [1024, 1024, 512];
const AFC_RANGE: (usize, usize) = (32, 256);
const WIDTH_LO: usize = 32;

pub const TARGET_KEY_SLOTS: usize = TARGET_DIM - 1;

/// One student configuration drawn from the search space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DesignPoint {
    pub token_dim: usize,
    pub attention_dim: usize,
    pub role_widths: Vec<usize>,
    pub img_widths: Vec<usize>,
    pub concat_widths: Vec<usize>,
    pub comm_widths: Vec<usize>,
    pub action_fc: usize,
}

impl DesignPoint {
    /// All lower bounds: 1-layer blocks, no communicate layers.
    pub fn minimal() -> Self {
        Self {
            token_dim: WIDTH_LO,
            attention_dim: WIDTH_LO,
            role_widths: vec![WIDTH_LO],
            img_widths: vec![WIDTH_LO],
            concat_widths: vec![WIDTH_LO],
            comm_widths: vec![],
            action_fc: WIDTH_LO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::DesignOutOfRange(msg));
        let chk = |v: usize, lo: usize, hi: usize, what: &str| -> Result<()> {
            if v < lo || v > hi {
                return err(format!("{what} = {v} outside [{lo}, {hi}]"));
            }
            Ok(())
        };
        chk(self.token_dim, TD_RANGE.0, TD_RANGE.1, "token_dim")?;
        chk(self.attention_dim, AD_RANGE.0, AD_RANGE.1, "attention_dim")?;
        chk(self.action_fc, AFC_RANGE.0, AFC_RANGE.1, "action_fc")?;
        let blocks: [(&str, &[usize], &[usize], usize); 4] = [
            ("role_feat_trans", &self.role_widths, &ROLE_CAPS, 1),
            ("img_feat_trans", &self.img_widths, &IMG_CAPS, 1),
            ("concat_feat_trans", &self.concat_widths, &CAT_CAPS, 1),
            ("communicate_feat_trans", &self.comm_widths, &COMM_CAPS, 0),
        ];
        for (name, widths, caps, min_layers) in blocks {
            if widths.len() < min_layers || widths.len() > caps.len() {
                return err(format!(
                    "{name} has {} layers, allowed {min_layers}..={}",
                    widths.len(),
                    caps.len()
                ));
            }
            for (i, w) in widths.iter().enumerate() {
                chk(*w, WIDTH_LO, caps[i], &format!("{name} layer {}", i + 1))?;
            }
        }
        Ok(())
    }

    /// Canonical text form; equal points serialize identically.
    pub fn canonical(&self) -> String {
        let join = |w: &[usize]| w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x");
        format!(
            "td{}.ad{}.role{}.img{}.cat{}.comm{}.afc{}",
            self.token_dim,
            self.attention_dim,
            join(&self.role_widths),
            join(&self.img_widths),
            join(&self.concat_widths),
            join(&self.comm_widths),
            self.action_fc
        )
    }

    pub fn parse(s: &str) -> Result<Self> {
        let fields: Vec<&str> = s.split('.').collect();
        if fields.len() != 7 {
            return Err(Error::Format(format!("design string needs 7 fields: {s}")));
        }
        let tail = |f: &str, prefix: &str| -> Result<String> {
            f.strip_prefix(prefix)
                .map(|t| t.to_string())
                .ok_or_else(|| Error::Format(format!("expected {prefix}... in {f}")))
        };
        let num = |t: &str| -> Result<usize> {
            t.parse::<usize>().map_err(|_| Error::Format(format!("bad number: {t}")))
        };
        let widths = |t: &str| -> Result<Vec<usize>> {
            if t.is_empty() {
                return Ok(vec![]);
            }
            t.split('x').map(num).collect()
        };
        let dp = Self {
            token_dim: num(&tail(fields[0], "td")?)?,
            attention_dim: num(&tail(fields[1], "ad")?)?,
            role_widths: widths(&tail(fields[2], "role")?)?,
            img_widths: widths(&tail(fields[3], "img")?)?,
            concat_widths: widths(&tail(fields[4], "cat")?)?,
            comm_widths: widths(&tail(fields[5], "comm")?)?,
            action_fc: num(&tail(fields[6], "afc")?)?,
        };
        dp.validate()?;
        Ok(dp)
    }
}

/// Extents derived from a design and a schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudentDims {
    pub conv_out: usize,
    pub positions: usize,
    pub img_out: usize,
    pub role_out: usize,
    pub concat_in: usize,
    pub cat_out: usize,
    pub private_dim: usize,
    pub public_dim: usize,
    pub final_dim: usize,
}

impl StudentDims {
    pub fn derive(design: &DesignPoint, schema: &ObservationSchema) -> Self {
        let conv_out = ((18.0 * schema.scale).round() as usize).max(1);
        let positions = schema.image.1 * schema.image.2;
        let img_out = *design.img_widths.last().expect("img block has >= 1 layer");
        let role_out = *design.role_widths.last().expect("role block has >= 1 layer");
        let td = design.token_dim;
        let concat_in = img_out + role_out + 3 * td + schema.current_hero + schema.whole_info;
        let cat_out = *design.concat_widths.last().expect("concat block has >= 1 layer");
        let private_dim = (((3 * cat_out) as f64) / 4.0).round().max(1.0) as usize;
        let private_dim = private_dim.min(cat_out - 1);
        let public_dim = cat_out - private_dim;
        let final_dim = design.comm_widths.last().copied().unwrap_or(cat_out);
        Self {
            conv_out,
            positions,
            img_out,
            role_out,
            concat_in,
            cat_out,
            private_dim,
            public_dim,
            final_dim,
        }
    }
}

struct StudentBlocks {
    conv_w: BlockId,
    conv_b: BlockId,
    embed: [(BlockId, BlockId); 4], // heroes, soldiers, turrets, monsters
    img: Vec<(BlockId, BlockId)>,
    role: Vec<(BlockId, BlockId)>,
    cat: Vec<(BlockId, BlockId)>,
    comm: Vec<(BlockId, BlockId)>,
    head_fc: [(BlockId, BlockId); 4],
    head_out: [(BlockId, BlockId); 4],
    target_query: (BlockId, BlockId),
    target_key: (BlockId, BlockId),
    target_none_key: BlockId,
}

pub struct StudentNet<F: Real> {
    pub design: DesignPoint,
    pub schema: ObservationSchema,
    pub seed: u64,
    pub dims: StudentDims,
    pub params: ParamSet<F>,
    blocks: StudentBlocks,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic parameters from the seed; the design must be within range.
pub fn build_student<F: Real>(design: &DesignPoint, schema: &ObservationSchema, seed: u64) -> Result<StudentNet<F>> {
    design.validate()?;
    let dims = StudentDims::derive(design, schema);
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5744));
    let mut p = ParamSet::new();
    let patch = schema.image.0 * 5 * 5;
    let td = design.token_dim;

    let dense = |p: &mut ParamSet<F>, rng: &mut ChaCha8Rng, name: &str, i: usize, o: usize| {
        let w = p.add_block(&format!("{name}.w"), &[i, o], Init::Glorot { fan_in: i, fan_out: o, gain: 1.0 }, rng);
        let b = p.add_block(&format!("{name}.b"), &[o], Init::Zeros, rng);
        (w, b)
    };

    let conv_w = p.add_block("conv.w", &[dims.conv_out, patch], Init::Glorot { fan_in: patch, fan_out: dims.conv_out, gain: 1.0 }, &mut rng);
    let conv_b = p.add_block("conv.b", &[dims.conv_out], Init::Zeros, &mut rng);
    let embed = [
        dense(&mut p, &mut rng, "embed.heroes", schema.heroes.1, td),
        dense(&mut p, &mut rng, "embed.soldiers", schema.soldiers.1, td),
        dense(&mut p, &mut rng, "embed.turrets", schema.turrets.1, td),
        dense(&mut p, &mut rng, "embed.monsters", schema.monsters.1, td),
    ];
    let chain = |p: &mut ParamSet<F>, rng: &mut ChaCha8Rng, name: &str, mut input: usize, widths: &[usize]| {
        let mut out = Vec::new();
        for (i, w) in widths.iter().enumerate() {
            out.push(dense(p, rng, &format!("{name}.l{i}"), input, *w));
            input = *w;
        }
        out
    };
    let img = chain(&mut p, &mut rng, "img", dims.conv_out, &design.img_widths);
    let role = chain(&mut p, &mut rng, "role", td, &design.role_widths);
    let cat = chain(&mut p, &mut rng, "cat", dims.concat_in, &design.concat_widths);
    let comm = chain(&mut p, &mut rng, "comm", dims.cat_out, &design.comm_widths);
    let head_names = ["button", "move", "ox", "oz"];
    let head_dims = [BUTTON_DIM, MOVE_DIM, OFFSET_DIM, OFFSET_DIM];
    let mut head_fc = Vec::new();
    let mut head_out = Vec::new();
    for (name, hd) in head_names.iter().zip(head_dims) {
        head_fc.push(dense(&mut p, &mut rng, &format!("head.{name}.fc"), dims.final_dim, design.action_fc));
        head_out.push(dense(&mut p, &mut rng, &format!("head.{name}.out"), design.action_fc, hd));
    }
    let target_query = dense(&mut p, &mut rng, "target.query", dims.final_dim, design.attention_dim);
    let target_key = dense(&mut p, &mut rng, "target.key", td, design.attention_dim);
    let target_none_key = p.add_block(
        "target.none_key",
        &[design.attention_dim],
        Init::Glorot { fan_in: design.attention_dim, fan_out: 1, gain: 1.0 },
        &mut rng,
    );

    let net = StudentNet {
        design: design.clone(),
        schema: schema.clone(),
        seed,
        dims,
        params: p,
        blocks: StudentBlocks {
            conv_w,
            conv_b,
            embed: embed.try_into().map_err(|_| Error::Format("embed blocks".into())).unwrap(),
            img,
            role,
            cat,
            comm,
            head_fc: head_fc.try_into().map_err(|_| Error::Format("head fc".into())).unwrap(),
            head_out: head_out.try_into().map_err(|_| Error::Format("head out".into())).unwrap(),
            target_query,
            target_key,
            target_none_key,
        },
    };
    Ok(net)
}

impl<F: Real> StudentNet<F> {
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Lifts the network into another scalar type (f64 checking mode).
    pub fn cast<G: Real>(&self) -> StudentNet<G> {
        StudentNet {
            design: self.design.clone(),
            schema: self.schema.clone(),
            seed: self.seed,
            dims: self.dims.clone(),
            params: self.params.cast::<G>(),
            blocks: StudentBlocks {
                conv_w: self.blocks.conv_w,
                conv_b: self.blocks.conv_b,
                embed: self.blocks.embed,
                img: self.blocks.img.clone(),
                role: self.blocks.role.clone(),
                cat: self.blocks.cat.clone(),
                comm: self.blocks.comm.clone(),
                head_fc: self.blocks.head_fc,
                head_out: self.blocks.head_out,
                target_query: self.blocks.target_query,
                target_key: self.blocks.target_key,
                target_none_key: self.blocks.target_none_key,
            },
        }
    }

    fn conv_shape(&self) -> ConvShape {
        ConvShape {
            c_in: self.schema.image.0,
            c_out: self.dims.conv_out,
            k: 5,
            stride: 1,
            pad: 2,
            h: self.schema.image.1,
            w: self.schema.image.2,
        }
    }
}

/// Category table used by the forward pass: (embed index, unit count, feat dim, flat offset).
fn categories(schema: &ObservationSchema, offs: &CategoryOffsets) -> [(usize, usize, usize, usize); 4] {
    [
        (0, schema.heroes.0, schema.heroes.1, offs.heroes),
        (1, schema.soldiers.0, schema.soldiers.1, offs.soldiers),
        (2, schema.turrets.0, schema.turrets.1, offs.turrets),
        (3, schema.monsters.0, schema.monsters.1, offs.monsters),
    ]
}

/// Which token row (within a hero's per-category token mats) each non-none
/// target slot reads: (category index, unit index).
pub fn target_slot_unit(hero: usize, slot: usize) -> (usize, usize) {
    match slot {
        1..=3 => (0, 3 + (slot - 1)),  // enemy heroes
        4..=6 => (0, slot - 4),        // friend heroes
        7 => (0, hero),                // self
        8..=27 => (3, slot - 8),       // monsters
        28..=37 => (1, slot - 28),     // first 10 soldiers
        38 => (2, 0),                  // closest turret
        _ => unreachable!("target slot {slot}"),
    }
}
/// Recycles matrix buffers between backward passes.
#[derive(Debug)]
struct MatPool<F> {
    free: Vec<Vec<F>>,
}

impl<F> MatPool<F> {
    fn new() -> Self {
        Self { free: Vec::new() }
    }
}

impl<F: Real> MatPool<F> {
    fn take(&mut self, rows: usize, cols: usize, zeroed: bool) -> Mat<F> {
        let mut data = self.free.pop().unwrap_or_default();
        if zeroed {
            data.clear();
        }
        data.resize(rows * cols, F::zero());
        Mat { rows, cols, data }
    }

    fn put(&mut self, m: Mat<F>) {
        self.free.push(m.data);
    }
}

/// Per-chunk activation cache plus reusable scratch. Buffers persist across
/// chunks and training steps; every cell is overwritten (or explicitly
/// zeroed) before it is read, so reuse never leaks state between batches.
pub struct ForwardCache<F> {
    pub n_rec: usize,
    pub b3: usize,
    conv_cols: Mat<F>,
    img_in: Vec<F>,
    img_rows: Vec<Mat<F>>,
    img_emb: Mat<F>,
    img_arg: Vec<u32>,
    tok_inputs: Vec<Mat<F>>,
    tokens: Vec<Mat<F>>,
    cat_pool: Vec<Mat<F>>,
    cat_arg: Vec<Vec<u32>>,
    role_outs: Vec<Mat<F>>,
    concat_in: Mat<F>,
    cat_outs: Vec<Mat<F>>,
    pooled_public: Mat<F>,
    gate_arg: Vec<u32>,
    comm_in: Mat<F>,
    comm_outs: Vec<Mat<F>>,
    head_hid: Vec<Mat<F>>,
    query: Mat<F>,
    slot_tokens: Mat<F>,
    keys: Mat<F>,
    /// raw logits per head: button, move, ox, oz, target
    pub logits: Vec<Mat<F>>,
    pool: MatPool<F>,
}

impl<F: Real> ForwardCache<F> {
    pub fn empty() -> Self {
        Self {
            n_rec: 0,
            b3: 0,
            conv_cols: Mat::zeros(0, 0),
            img_in: Vec::new(),
            img_rows: Vec::new(),
            img_emb: Mat::zeros(0, 0),
            img_arg: Vec::new(),
            tok_inputs: Vec::new(),
            tokens: Vec::new(),
            cat_pool: Vec::new(),
            cat_arg: Vec::new(),
            role_outs: Vec::new(),
            concat_in: Mat::zeros(0, 0),
            cat_outs: Vec::new(),
            pooled_public: Mat::zeros(0, 0),
            gate_arg: Vec::new(),
            comm_in: Mat::zeros(0, 0),
            comm_outs: Vec::new(),
            head_hid: Vec::new(),
            query: Mat::zeros(0, 0),
            slot_tokens: Mat::zeros(0, 0),
            keys: Mat::zeros(0, 0),
            logits: Vec::new(),
            pool: MatPool::new(),
        }
    }

    /// Final embedding rows (after the communicate block, or the gated concat
    /// output when there are no communicate layers).
    fn final_rows(&self) -> &Mat<F> {
        self.comm_outs.last().unwrap_or(&self.comm_in)
    }
}

fn ensure_mats<F: Real>(v: &mut Vec<Mat<F>>, n: usize) {
    if v.len() != n {
        v.clear();
        v.resize_with(n, || Mat::zeros(0, 0));
    }
}

/// y_i = relu(x_i W + b) layer chain with buffer reuse.
fn run_chain<F: Real>(p: &ParamSet<F>, layers: &[(BlockId, BlockId)], input: &Mat<F>, outs: &mut Vec<Mat<F>>) {
    ensure_mats(outs, layers.len());
    for (i, (w, b)) in layers.iter().enumerate() {
        let wi = p.block_info(*w);
        let (in_dim, out_dim) = (wi.shape[0], wi.shape[1]);
        let (done, rest) = outs.split_at_mut(i);
        let x: &Mat<F> = if i == 0 { input } else { &done[i - 1] };
        let y = &mut rest[0];
        y.reset_for_overwrite(x.rows, out_dim);
        dense_forward_into(&x.data, x.rows, in_dim, p.get(*w), p.get(*b), out_dim, &mut y.data);
        relu_inplace(&mut y.data);
    }
}

/// Elementwise max over `count` consecutive rows per output row; ties keep
/// the first index.
fn rows_max_pool<F: Real>(src: &Mat<F>, groups: usize, count: usize, width: usize, out: &mut Mat<F>, arg: &mut Vec<u32>) {
    out.reset_for_overwrite(groups, width);
    arg.clear();
    arg.resize(groups * width, 0);
    for i in 0..groups {
        let o = &mut out.data[i * width..(i + 1) * width];
        o.copy_from_slice(src.row(i * count));
        let a = &mut arg[i * width..(i + 1) * width];
        for u in 1..count {
            let row = src.row(i * count + u);
            for j in 0..width {
                if row[j] > o[j] {
                    o[j] = row[j];
                    a[j] = u as u32;
                }
            }
        }
    }
}

/// Forward over a chunk of records. `groups` holds one flat 3-hero
/// observation block per record. Raw logits land in `cache.logits`.
pub fn forward_chunk<F: Real>(net: &StudentNet<F>, groups: &[&[f32]], cache: &mut ForwardCache<F>) -> Result<()> {
    let schema = &net.schema;
    let dims = &net.dims;
    let offs = schema.offsets();
    let per_hero = schema.per_hero_total();
    let n_rec = groups.len();
    let b3 = n_rec * HEROES_PER_TEAM;
    let td = net.design.token_dim;
    let ad = net.design.attention_dim;
    let p = &net.params;
    let bl = &net.blocks;
    let conv_shape = net.conv_shape();
    let (oh, ow) = conv_shape.out_hw()?;
    let positions = oh * ow;
    debug_assert_eq!(positions, dims.positions);
    let plen = conv_shape.patch_len();

    cache.n_rec = n_rec;
    cache.b3 = b3;

    // --- conv as one position-major GEMM over all heroes ---
    cache.conv_cols.reset_for_overwrite(b3 * positions, plen);
    cache.img_in.resize(schema.image_len(), F::zero());
    for (r, g) in groups.iter().enumerate() {
        for h in 0..HEROES_PER_TEAM {
            let i = r * HEROES_PER_TEAM + h;
            let frame = &g[h * per_hero..(h + 1) * per_hero];
            for (dst, src) in cache.img_in.iter_mut().zip(&frame[offs.image..offs.image + schema.image_len()]) {
                *dst = F::from_f64(*src as f64);
            }
            let span = &mut cache.conv_cols.data[i * positions * plen..(i + 1) * positions * plen];
            crate::nn::conv::im2col(&cache.img_in, &conv_shape, oh, ow, span);
        }
    }
    ensure_mats(&mut cache.img_rows, net.blocks.img.len() + 1);
    {
        let rows0 = &mut cache.img_rows[0];
        rows0.reset_for_overwrite(b3 * positions, dims.conv_out);
        // rows0 = cols * conv_w^T + bias, position-major
        F::gemm(
            false,
            true,
            b3 * positions,
            dims.conv_out,
            plen,
            F::one(),
            &cache.conv_cols.data,
            p.get(bl.conv_w),
            F::zero(),
            &mut rows0.data,
        );
        let cb = p.get(bl.conv_b);
        for row in rows0.data.chunks_mut(dims.conv_out) {
            for (v, b) in row.iter_mut().zip(cb) {
                let s = *v + *b;
                *v = if s > F::zero() { s } else { F::zero() };
            }
        }
    }
    for (li, (w, b)) in bl.img.iter().enumerate() {
        let wi = p.block_info(*w);
        let (in_dim, out_dim) = (wi.shape[0], wi.shape[1]);
        let (done, rest) = cache.img_rows.split_at_mut(li + 1);
        let x = &done[li];
        let y = &mut rest[0];
        y.reset_for_overwrite(x.rows, out_dim);
        dense_forward_into(&x.data, x.rows, in_dim, p.get(*w), p.get(*b), out_dim, &mut y.data);
        relu_inplace(&mut y.data);
    }
    // spatial max-pool over the 289 positions
    {
        let last = cache.img_rows.last().unwrap();
        let m_last = last.cols;
        cache.img_emb.reset_for_overwrite(b3, m_last);
        cache.img_arg.clear();
        cache.img_arg.resize(b3 * m_last, 0);
        for i in 0..b3 {
            let out = &mut cache.img_emb.data[i * m_last..(i + 1) * m_last];
            let arg = &mut cache.img_arg[i * m_last..(i + 1) * m_last];
            out.copy_from_slice(last.row(i * positions));
            for pos in 1..positions {
                let row = last.row(i * positions + pos);
                for j in 0..m_last {
                    if row[j] > out[j] {
                        out[j] = row[j];
                        arg[j] = pos as u32;
                    }
                }
            }
        }
    }

    // --- per-category tokens ---
    let cats = categories(schema, &offs);
    ensure_mats(&mut cache.tok_inputs, 4);
    ensure_mats(&mut cache.tokens, 4);
    ensure_mats(&mut cache.cat_pool, 4);
    if cache.cat_arg.len() != 4 {
        cache.cat_arg = vec![Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    }
    for (e, count, fd, off) in cats {
        let m = b3 * count;
        let input = &mut cache.tok_inputs[e];
        input.reset_for_overwrite(m, fd);
        for (r, g) in groups.iter().enumerate() {
            for h in 0..HEROES_PER_TEAM {
                let frame = &g[h * per_hero..(h + 1) * per_hero];
                let dst_base = ((r * HEROES_PER_TEAM + h) * count) * fd;
                for (k, v) in frame[off..off + count * fd].iter().enumerate() {
                    input.data[dst_base + k] = F::from_f64(*v as f64);
                }
            }
        }
        let (w, b) = bl.embed[e];
        let tok = &mut cache.tokens[e];
        tok.reset_for_overwrite(m, td);
        dense_forward_into(&input.data, m, fd, p.get(w), p.get(b), td, &mut tok.data);
        relu_inplace(&mut tok.data);
    }
    // role transform on hero tokens, then per-category pooling
    run_chain(p, &bl.role, &cache.tokens[0], &mut cache.role_outs);
    for e in 0..4 {
        let (src, width, count): (&Mat<F>, usize, usize) = if e == 0 {
            (cache.role_outs.last().unwrap(), dims.role_out, schema.heroes.0)
        } else {
            (&cache.tokens[e], td, cats[e].1)
        };
        // split borrow: pool output lives in a different vec than src
        let pool_ptr: *mut Mat<F> = &mut cache.cat_pool[e];
        let arg = &mut cache.cat_arg[e];
        // SAFETY: cat_pool and tokens/role_outs are disjoint fields
        let pool = unsafe { &mut *pool_ptr };
        rows_max_pool(src, b3, count, width, pool, arg);
    }

    // --- concat ---
    cache.concat_in.reset_for_overwrite(b3, dims.concat_in);
    for (r, g) in groups.iter().enumerate() {
        for h in 0..HEROES_PER_TEAM {
            let i = r * HEROES_PER_TEAM + h;
            let frame = &g[h * per_hero..(h + 1) * per_hero];
            let dst = cache.concat_in.row_mut(i);
            let mut c = 0;
            dst[c..c + dims.img_out].copy_from_slice(cache.img_emb.row(i));
            c += dims.img_out;
            dst[c..c + dims.role_out].copy_from_slice(cache.cat_pool[0].row(i));
            c += dims.role_out;
            for e in 1..4 {
                dst[c..c + td].copy_from_slice(cache.cat_pool[e].row(i));
                c += td;
            }
            for (k, v) in frame[offs.current..offs.current + schema.current_hero].iter().enumerate() {
                dst[c + k] = F::from_f64(*v as f64);
            }
            c += schema.current_hero;
            for (k, v) in frame[offs.whole..offs.whole + schema.whole_info].iter().enumerate() {
                dst[c + k] = F::from_f64(*v as f64);
            }
        }
    }
    run_chain(p, &bl.cat, &cache.concat_in, &mut cache.cat_outs);

    // --- split + triplet max-fusion gate ---
    let (pd, pubd) = (dims.private_dim, dims.public_dim);
    {
        let emb = cache.cat_outs.last().unwrap();
        cache.pooled_public.reset_for_overwrite(n_rec, pubd);
        cache.gate_arg.clear();
        cache.gate_arg.resize(n_rec * pubd, 0);
        for r in 0..n_rec {
            let out = &mut cache.pooled_public.data[r * pubd..(r + 1) * pubd];
            let arg = &mut cache.gate_arg[r * pubd..(r + 1) * pubd];
            out.copy_from_slice(&emb.row(r * HEROES_PER_TEAM)[pd..]);
            for h in 1..HEROES_PER_TEAM {
                let row = &emb.row(r * HEROES_PER_TEAM + h)[pd..];
                for j in 0..pubd {
                    if row[j] > out[j] {
                        out[j] = row[j];
                        arg[j] = h as u32;
                    }
                }
            }
        }
        cache.comm_in.reset_for_overwrite(b3, dims.cat_out);
        for r in 0..n_rec {
            for h in 0..HEROES_PER_TEAM {
                let i = r * HEROES_PER_TEAM + h;
                let dst = cache.comm_in.row_mut(i);
                dst[..pd].copy_from_slice(&emb.row(i)[..pd]);
                dst[pd..].copy_from_slice(cache.pooled_public.row(r));
            }
        }
    }
    run_chain(p, &bl.comm, &cache.comm_in, &mut cache.comm_outs);

    // --- heads ---
    let head_out_dims = [BUTTON_DIM, MOVE_DIM, OFFSET_DIM, OFFSET_DIM];
    ensure_mats(&mut cache.head_hid, 4);
    ensure_mats(&mut cache.logits, 5);
    let afc = net.design.action_fc;
    {
        let final_rows = cache.comm_outs.last().unwrap_or(&cache.comm_in);
        let fdim = final_rows.cols;
        for k in 0..4 {
            let (fw, fb) = bl.head_fc[k];
            let hid = &mut cache.head_hid[k];
            hid.reset_for_overwrite(b3, afc);
            dense_forward_into(&final_rows.data, b3, fdim, p.get(fw), p.get(fb), afc, &mut hid.data);
            relu_inplace(&mut hid.data);
            let (ow_, ob_) = bl.head_out[k];
            let out = &mut cache.logits[k];
            out.reset_for_overwrite(b3, head_out_dims[k]);
            dense_forward_into(&hid.data, b3, afc, p.get(ow_), p.get(ob_), head_out_dims[k], &mut out.data);
        }
        cache.query.reset_for_overwrite(b3, ad);
        dense_forward_into(
            &final_rows.data,
            b3,
            fdim,
            p.get(bl.target_query.0),
            p.get(bl.target_query.1),
            ad,
            &mut cache.query.data,
        );
    }
    cache.slot_tokens.reset_for_overwrite(b3 * TARGET_KEY_SLOTS, td);
    for r in 0..n_rec {
        for h in 0..HEROES_PER_TEAM {
            let i = r * HEROES_PER_TEAM + h;
            for slot in 1..TARGET_DIM {
                let (cat, unit) = target_slot_unit(h, slot);
                let count = cats[cat].1;
                let src = cache.tokens[cat].row(i * count + unit);
                cache.slot_tokens.row_mut(i * TARGET_KEY_SLOTS + slot - 1).copy_from_slice(src);
            }
        }
    }
    cache.keys.reset_for_overwrite(b3 * TARGET_KEY_SLOTS, ad);
    dense_forward_into(
        &cache.slot_tokens.data,
        b3 * TARGET_KEY_SLOTS,
        td,
        p.get(bl.target_key.0),
        p.get(bl.target_key.1),
        ad,
        &mut cache.keys.data,
    );
    {
        let none_key = p.get(bl.target_none_key);
        let target = &mut cache.logits[4];
        target.reset_for_overwrite(b3, TARGET_DIM);
        for i in 0..b3 {
            let q = cache.query.row(i);
            let mut s = F::zero();
            for (a, b) in q.iter().zip(none_key) {
                s = s + *a * *b;
            }
            let out = target.row_mut(i);
            out[0] = s;
            for slot in 1..TARGET_DIM {
                let k = cache.keys.row(i * TARGET_KEY_SLOTS + slot - 1);
                let mut s = F::zero();
                for (a, b) in q.iter().zip(k) {
                    s = s + *a * *b;
                }
                out[slot] = s;
            }
        }
    }
    Ok(())
}

/// Splits disjoint (weight, bias) gradient regions out of the flat buffer.
fn grad_pair<'g, F: Real>(p: &ParamSet<F>, grads: &'g mut [F], w: BlockId, b: BlockId) -> (&'g mut [F], &'g mut [F]) {
    let wi = p.block_info(w);
    let bi = p.block_info(b);
    debug_assert!(wi.offset + wi.len <= bi.offset);
    let (head, tail) = grads.split_at_mut(bi.offset);
    (&mut head[wi.offset..wi.offset + wi.len], &mut tail[..bi.len])
}

/// Reverse pass over a relu-dense chain; takes ownership of the incoming
/// gradient mat and returns the gradient w.r.t. the chain input.
fn chain_backward<F: Real>(
    p: &ParamSet<F>,
    layers: &[(BlockId, BlockId)],
    input: &Mat<F>,
    outs: &[Mat<F>],
    mut d_cur: Mat<F>,
    grads: &mut [F],
    pool: &mut MatPool<F>,
) -> Mat<F> {
    for (li, (w, b)) in layers.iter().enumerate().rev() {
        let y = &outs[li];
        relu_backward_inplace(&y.data, &mut d_cur.data);
        let x: &Mat<F> = if li == 0 { input } else { &outs[li - 1] };
        let wi = p.block_info(*w);
        let (in_dim, out_dim) = (wi.shape[0], wi.shape[1]);
        {
            let (dw, db) = grad_pair(p, grads, *w, *b);
            dense_backward_params(&x.data, &d_cur.data, x.rows, in_dim, out_dim, dw, db);
        }
        let mut d_prev = pool.take(x.rows, in_dim, false);
        dense_backward_input(&d_cur.data, x.rows, in_dim, out_dim, p.get(*w), &mut d_prev.data);
        pool.put(d_cur);
        d_cur = d_prev;
    }
    d_cur
}

/// Backward over a chunk. `d_logits` are gradients w.r.t. the raw logits
/// (same layout as `cache.logits`). Accumulates into `grads`, which is laid
/// out like `net.params`.
pub fn backward_chunk<F: Real>(
    net: &StudentNet<F>,
    groups: &[&[f32]],
    cache: &mut ForwardCache<F>,
    d_logits: &[Mat<F>],
    grads: &mut [F],
) -> Result<()> {
    let _ = groups;
    let schema = &net.schema;
    let dims = &net.dims;
    let offs = schema.offsets();
    let p = &net.params;
    let bl = &net.blocks;
    let b3 = cache.b3;
    let n_rec = cache.n_rec;
    let td = net.design.token_dim;
    let ad = net.design.attention_dim;
    let afc = net.design.action_fc;
    let cats = categories(schema, &offs);
    // move the pool out so cache stays shareable
    let mut pool = std::mem::replace(&mut cache.pool, MatPool::new());
    let final_rows = cache.final_rows();
    let fdim = final_rows.cols;

    let mut d_final = pool.take(b3, fdim, true);

    // --- action heads ---
    let head_out_dims = [BUTTON_DIM, MOVE_DIM, OFFSET_DIM, OFFSET_DIM];
    for k in 0..4 {
        let d_out = &d_logits[k];
        let hid = &cache.head_hid[k];
        let (ow_, ob_) = bl.head_out[k];
        {
            let (dw, db) = grad_pair(p, grads, ow_, ob_);
            dense_backward_params(&hid.data, &d_out.data, b3, afc, head_out_dims[k], dw, db);
        }
        let mut d_hid = pool.take(b3, afc, false);
        dense_backward_input(&d_out.data, b3, afc, head_out_dims[k], p.get(ow_), &mut d_hid.data);
        relu_backward_inplace(&hid.data, &mut d_hid.data);
        let (fw, fb) = bl.head_fc[k];
        {
            let (dw, db) = grad_pair(p, grads, fw, fb);
            dense_backward_params(&final_rows.data, &d_hid.data, b3, fdim, afc, dw, db);
        }
        let mut tmp = pool.take(b3, fdim, false);
        dense_backward_input(&d_hid.data, b3, fdim, afc, p.get(fw), &mut tmp.data);
        for (a, t) in d_final.data.iter_mut().zip(&tmp.data) {
            *a = *a + *t;
        }
        pool.put(d_hid);
        pool.put(tmp);
    }

    // --- target head ---
    let d_target = &d_logits[4];
    let none_key = p.get(bl.target_none_key);
    let mut d_query = pool.take(b3, ad, true);
    let mut d_keys = pool.take(b3 * TARGET_KEY_SLOTS, ad, true);
    {
        let mut d_none = vec![F::zero(); ad];
        for i in 0..b3 {
            let q = cache.query.row(i);
            let g0 = d_target.row(i)[0];
            if g0 != F::zero() {
                let dq = d_query.row_mut(i);
                for j in 0..ad {
                    dq[j] = dq[j] + g0 * none_key[j];
                    d_none[j] = d_none[j] + g0 * q[j];
                }
            }
            for slot in 1..TARGET_DIM {
                let g = d_target.row(i)[slot];
                if g == F::zero() {
                    continue;
                }
                let krow = cache.keys.row(i * TARGET_KEY_SLOTS + slot - 1);
                let dkrow = d_keys.row_mut(i * TARGET_KEY_SLOTS + slot - 1);
                let dq = d_query.row_mut(i);
                for j in 0..ad {
                    dq[j] = dq[j] + g * krow[j];
                    dkrow[j] = dkrow[j] + g * q[j];
                }
            }
        }
        let nk = p.block_info(bl.target_none_key);
        for (g, v) in grads[nk.offset..nk.offset + nk.len].iter_mut().zip(&d_none) {
            *g = *g + *v;
        }
    }
    {
        let (dw, db) = grad_pair(p, grads, bl.target_query.0, bl.target_query.1);
        dense_backward_params(&final_rows.data, &d_query.data, b3, fdim, ad, dw, db);
    }
    {
        let mut tmp = pool.take(b3, fdim, false);
        dense_backward_input(&d_query.data, b3, fdim, ad, p.get(bl.target_query.0), &mut tmp.data);
        for (a, t) in d_final.data.iter_mut().zip(&tmp.data) {
            *a = *a + *t;
        }
        pool.put(tmp);
    }
    pool.put(std::mem::replace(&mut d_query, Mat::zeros(0, 0)));
    {
        let (dw, db) = grad_pair(p, grads, bl.target_key.0, bl.target_key.1);
        dense_backward_params(&cache.slot_tokens.data, &d_keys.data, b3 * TARGET_KEY_SLOTS, td, ad, dw, db);
    }
    let mut d_slot_tokens = pool.take(b3 * TARGET_KEY_SLOTS, td, false);
    dense_backward_input(&d_keys.data, b3 * TARGET_KEY_SLOTS, td, ad, p.get(bl.target_key.0), &mut d_slot_tokens.data);
    pool.put(std::mem::replace(&mut d_keys, Mat::zeros(0, 0)));

    // token grads per category (pooling path adds below)
    let mut d_tokens: Vec<Mat<F>> = cats.iter().map(|(_, count, _, _)| pool.take(b3 * count, td, true)).collect();
    for r in 0..n_rec {
        for h in 0..HEROES_PER_TEAM {
            let i = r * HEROES_PER_TEAM + h;
            for slot in 1..TARGET_DIM {
                let (cat, unit) = target_slot_unit(h, slot);
                let count = cats[cat].1;
                let src = d_slot_tokens.row(i * TARGET_KEY_SLOTS + slot - 1);
                let dst = d_tokens[cat].row_mut(i * count + unit);
                for (a, s) in dst.iter_mut().zip(src) {
                    *a = *a + *s;
                }
            }
        }
    }
    pool.put(std::mem::replace(&mut d_slot_tokens, Mat::zeros(0, 0)));

    // --- communicate chain down to the gated embedding ---
    let d_comm_in = if bl.comm.is_empty() {
        d_final
    } else {
        chain_backward(p, &bl.comm, &cache.comm_in, &cache.comm_outs, d_final, grads, &mut pool)
    };

    // --- un-gate ---
    let (pd, pubd) = (dims.private_dim, dims.public_dim);
    let mut d_emb = pool.take(b3, dims.cat_out, true);
    for r in 0..n_rec {
        for j in 0..pubd {
            let mut acc = F::zero();
            for h in 0..HEROES_PER_TEAM {
                acc = acc + d_comm_in.row(r * HEROES_PER_TEAM + h)[pd + j];
            }
            let src_h = cache.gate_arg[r * pubd + j] as usize;
            let dst = d_emb.row_mut(r * HEROES_PER_TEAM + src_h);
            dst[pd + j] = dst[pd + j] + acc;
        }
        for h in 0..HEROES_PER_TEAM {
            let i = r * HEROES_PER_TEAM + h;
            let src = d_comm_in.row(i);
            let dst = d_emb.row_mut(i);
            for j in 0..pd {
                dst[j] = dst[j] + src[j];
            }
        }
    }
    pool.put(d_comm_in);

    // --- concat chain ---
    let d_concat_in = chain_backward(p, &bl.cat, &cache.concat_in, &cache.cat_outs, d_emb, grads, &mut pool);

    // --- split concat gradient ---
    let mut d_img_emb = pool.take(b3, dims.img_out, false);
    let mut d_cat_pool: Vec<Mat<F>> = vec![
        pool.take(b3, dims.role_out, false),
        pool.take(b3, td, false),
        pool.take(b3, td, false),
        pool.take(b3, td, false),
    ];
    for i in 0..b3 {
        let src = d_concat_in.row(i);
        let mut c = 0;
        d_img_emb.row_mut(i).copy_from_slice(&src[c..c + dims.img_out]);
        c += dims.img_out;
        d_cat_pool[0].row_mut(i).copy_from_slice(&src[c..c + dims.role_out]);
        c += dims.role_out;
        for e in 1..4 {
            d_cat_pool[e].row_mut(i).copy_from_slice(&src[c..c + td]);
            c += td;
        }
        // current / whole are raw inputs: no gradient consumers
    }
    pool.put(d_concat_in);

    // --- un-pool categories ---
    let mut d_role_last = pool.take(b3 * schema.heroes.0, dims.role_out, true);
    for i in 0..b3 {
        let arg = &cache.cat_arg[0][i * dims.role_out..(i + 1) * dims.role_out];
        let src = d_cat_pool[0].row(i);
        for j in 0..dims.role_out {
            let u = arg[j] as usize;
            let dst = d_role_last.row_mut(i * schema.heroes.0 + u);
            dst[j] = dst[j] + src[j];
        }
    }
    let d_hero_tokens_from_role =
        chain_backward(p, &bl.role, &cache.tokens[0], &cache.role_outs, d_role_last, grads, &mut pool);
    for (a, s) in d_tokens[0].data.iter_mut().zip(&d_hero_tokens_from_role.data) {
        *a = *a + *s;
    }
    pool.put(d_hero_tokens_from_role);
    for e in 1..4 {
        let count = cats[e].1;
        for i in 0..b3 {
            let arg = &cache.cat_arg[e][i * td..(i + 1) * td];
            let src = d_cat_pool[e].row(i);
            for j in 0..td {
                let u = arg[j] as usize;
                let dst = d_tokens[e].row_mut(i * count + u);
                dst[j] = dst[j] + src[j];
            }
        }
    }
    for m in d_cat_pool.drain(..) {
        pool.put(m);
    }

    // --- token embedders ---
    for e in 0..4 {
        let (w, b) = bl.embed[e];
        let tok = &cache.tokens[e];
        let mut d_tok = std::mem::replace(&mut d_tokens[e], Mat::zeros(0, 0));
        relu_backward_inplace(&tok.data, &mut d_tok.data);
        let input = &cache.tok_inputs[e];
        {
            let (dw, db) = grad_pair(p, grads, w, b);
            dense_backward_params(&input.data, &d_tok.data, input.rows, input.cols, td, dw, db);
        }
        pool.put(d_tok);
    }

    // --- image path ---
    let positions = dims.positions;
    let m_last = cache.img_rows.last().unwrap().cols;
    let mut d_img_rows = pool.take(b3 * positions, m_last, true);
    for i in 0..b3 {
        let arg = &cache.img_arg[i * m_last..(i + 1) * m_last];
        let src = d_img_emb.row(i);
        for j in 0..m_last {
            let pos = arg[j] as usize;
            let dst = d_img_rows.row_mut(i * positions + pos);
            dst[j] = dst[j] + src[j];
        }
    }
    pool.put(std::mem::replace(&mut d_img_emb, Mat::zeros(0, 0)));
    // img chain: inputs are img_rows[0..n], outputs img_rows[1..=n]
    let img_outs = &cache.img_rows[1..];
    let mut d_rows0 = chain_backward(p, &bl.img, &cache.img_rows[0], img_outs, d_img_rows, grads, &mut pool);

    // conv: relu mask on the position-major rows, then one transposed GEMM
    relu_backward_inplace(&cache.img_rows[0].data, &mut d_rows0.data);
    let conv_shape = net.conv_shape();
    let plen = conv_shape.patch_len();
    {
        let (dw, db) = grad_pair(p, grads, bl.conv_w, bl.conv_b);
        // dw [c_out, plen] += d_rows0^T * cols
        F::gemm(
            true,
            false,
            dims.conv_out,
            plen,
            b3 * positions,
            F::one(),
            &d_rows0.data,
            &cache.conv_cols.data,
            F::one(),
            dw,
        );
        for row in d_rows0.data.chunks(dims.conv_out) {
            for (acc, v) in db.iter_mut().zip(row) {
                *acc = *acc + *v;
            }
        }
    }
    pool.put(d_rows0);
    cache.pool = pool;
    Ok(())
}
/// Masked per-head distributions for one frame group, teacher-record layout.
#[derive(Debug, Clone)]
pub struct HeadDistributions {
    pub raw: Vec<Vec<f32>>,
    pub masked: Option<Vec<Vec<f32>>>,
}

/// Single-group forward. Raw logits per head per hero; masked
/// temperature-softmax distributions when `tau` is given. The target head is
/// conditioned on each hero's masked button argmax.
pub fn student_forward(
    net: &StudentNet<f32>,
    group: &[f32],
    masks: &[crate::env::MaskSet; HEROES_PER_TEAM],
    tau: Option<f32>,
) -> Result<Vec<HeadDistributions>> {
    if group.len() != net.schema.group_total() {
        return Err(Error::ShapeMismatch(format!(
            "student_forward: group has {} values, schema wants {}",
            group.len(),
            net.schema.group_total()
        )));
    }
    let mut cache = ForwardCache::empty();
    forward_chunk(net, &[group], &mut cache)?;
    let mut out = Vec::with_capacity(HEROES_PER_TEAM);
    for h in 0..HEROES_PER_TEAM {
        let raw: Vec<Vec<f32>> = cache.logits.iter().map(|m| m.row(h).to_vec()).collect();
        let masked = if let Some(t) = tau {
            let button = crate::nn::masked_temperature_softmax_vec(&raw[0], &masks[h].button, t)?;
            let chosen = crate::teacher::masked_argmax(&raw[0], &masks[h].button)
                .ok_or(Error::NoLegalAction)?;
            let hm = masks[h].head_masks(chosen);
            let mut dists = vec![button];
            for k in 1..5 {
                dists.push(crate::nn::masked_temperature_softmax_vec(&raw[k], &hm[k], t)?);
            }
            Some(dists)
        } else {
            None
        };
        out.push(HeadDistributions { raw, masked });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{derive_masks, generate_frames, make_schema};

    fn small_schema() -> ObservationSchema {
        make_schema(0.08).unwrap()
    }

    #[test]
    fn canonical_roundtrip() {
        let d = DesignPoint {
            token_dim: 64,
            attention_dim: 48,
            role_widths: vec![128, 64],
            img_widths: vec![256, 128],
            concat_widths: vec![1024, 512],
            comm_widths: vec![],
            action_fc: 96,
        };
        let s = d.canonical();
        assert_eq!(s, "td64.ad48.role128x64.img256x128.cat1024x512.comm.afc96");
        assert_eq!(DesignPoint::parse(&s).unwrap(), d);
        let m = DesignPoint::minimal();
        assert_eq!(DesignPoint::parse(&m.canonical()).unwrap(), m);
    }

    #[test]
    fn out_of_range_rejected() {
        let mut d = DesignPoint::minimal();
        d.token_dim = 16;
        assert!(d.validate().is_err());
        let mut d = DesignPoint::minimal();
        d.concat_widths = vec![4096, 4096];
        assert!(d.validate().is_err());
        let mut d = DesignPoint::minimal();
        d.comm_widths = vec![32, 32, 32, 32];
        assert!(d.validate().is_err());
        assert!(build_student::<f32>(&d, &small_schema(), 1).is_err());
    }

    #[test]
    fn minimal_design_builds_small() {
        let schema = make_schema(1.0).unwrap();
        let net = build_student::<f32>(&DesignPoint::minimal(), &schema, 7).unwrap();
        assert!(net.param_count() < 500_000, "params = {}", net.param_count());
    }

    #[test]
    fn deterministic_build() {
        let schema = small_schema();
        let d = DesignPoint::minimal();
        let a = build_student::<f32>(&d, &schema, 5).unwrap();
        let b = build_student::<f32>(&d, &schema, 5).unwrap();
        assert_eq!(a.params.data(), b.params.data());
    }

    #[test]
    fn forward_smoke_zero_frame_and_uniform_masked() {
        let schema = small_schema();
        let d = DesignPoint::minimal();
        let mut net = build_student::<f32>(&d, &schema, 5).unwrap();
        // zero parameters -> all logits zero -> uniform over mask support
        net.params.data_mut().iter_mut().for_each(|v| *v = 0.0);
        let frames = generate_frames(&schema, 3, 1).unwrap();
        let masks = derive_masks(&frames[0], &schema);
        let outs = student_forward(&net, &frames[0].data, &masks, Some(1.0)).unwrap();
        for (h, hd) in outs.iter().enumerate() {
            let dists = hd.masked.as_ref().unwrap();
            let legal = masks[h].button.iter().filter(|b| **b).count();
            for (j, v) in dists[0].iter().enumerate() {
                if masks[h].button[j] {
                    assert!((v - 1.0 / legal as f32).abs() < 1e-6);
                } else {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn hero_permutation_public_invariant() {
        let schema = small_schema();
        let d = DesignPoint {
            token_dim: 32,
            attention_dim: 32,
            role_widths: vec![32],
            img_widths: vec![32],
            concat_widths: vec![64],
            comm_widths: vec![32],
            action_fc: 32,
        };
        let net = build_student::<f32>(&d, &schema, 9).unwrap();
        let frames = generate_frames(&schema, 21, 1).unwrap();
        let n = schema.per_hero_total();
        let g = &frames[0].data;
        let mut swapped = g.clone();
        swapped[0..n].copy_from_slice(&g[n..2 * n]);
        swapped[n..2 * n].copy_from_slice(&g[0..n]);

        let masks = derive_masks(&frames[0], &schema);
        let base = student_forward(&net, g, &masks, None).unwrap();
        let swapped_group = crate::env::FrameGroup { data: swapped };
        let masks_sw = derive_masks(&swapped_group, &schema);
        let out = student_forward(&net, &swapped_group.data, &masks_sw, None).unwrap();
        // private paths permute: hero0's button logits now appear at row 1
        for (a, b) in base[0].raw[0].iter().zip(&out[1].raw[0]) {
            assert!((a - b).abs() < 1e-5);
        }
        for (a, b) in base[1].raw[1].iter().zip(&out[0].raw[1]) {
            assert!((a - b).abs() < 1e-5);
        }
        // hero 2 untouched: the pooled public embedding is permutation-invariant
        for (a, b) in base[2].raw[0].iter().zip(&out[2].raw[0]) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn masked_argmax_always_legal() {
        let schema = small_schema();
        let d = DesignPoint::minimal();
        let net = build_student::<f32>(&d, &schema, 77).unwrap();
        let frames = generate_frames(&schema, 5, 32).unwrap();
        for g in &frames {
            let masks = derive_masks(g, &schema);
            let outs = student_forward(&net, &g.data, &masks, Some(1.0)).unwrap();
            for h in 0..HEROES_PER_TEAM {
                let dists = outs[h].masked.as_ref().unwrap();
                let b = crate::teacher::masked_argmax(&outs[h].raw[0], &masks[h].button).unwrap();
                assert!(masks[h].button[b]);
                let eff = masks[h].effective_target_mask(b);
                let am = dists[4]
                    .iter()
                    .enumerate()
                    .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
                    .unwrap()
                    .0;
                assert!(eff[am], "target argmax {am} illegal");
            }
        }
    }
}
