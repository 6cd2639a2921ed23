//! Analytic efficiency accounting and host latency measurement.
//!
//! FLOPs convention: one multiply-accumulate counts as one FLOP and each bias
//! add as one, so a dense layer costs in*out + out — the convention under
//! which the teacher LSTM's FLOPs equal its parameter count. ReLU, softmax
//! and pooling count one op per element; attention layers use
//! 4nd^2 + 2n^2 d + nd^2. Block rows carry single-application costs plus an
//! application count (3 for per-hero blocks); totals sum flops_per_app*apps.

use crate::env::{ObservationSchema, BUTTON_DIM, HEROES_PER_TEAM, MOVE_DIM, OFFSET_DIM, TARGET_DIM};
use crate::error::{Error, Result};
use crate::student::{DesignPoint, StudentDims, StudentNet, TARGET_KEY_SLOTS};
use crate::teacher::{TeacherDims, TEACHER_ENC_LAYERS, TEACHER_TOKENS};

/// Module grouping used for breakdown shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModuleGroup {
    Cnn,
    Extractor,
    Encoder,
    Fusion,
    Gate,
    Lstm,
    Heads,
}

impl ModuleGroup {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModuleGroup::Cnn => "cnn",
            ModuleGroup::Extractor => "extractor",
            ModuleGroup::Encoder => "encoder",
            ModuleGroup::Fusion => "fusion",
            ModuleGroup::Gate => "gate",
            ModuleGroup::Lstm => "lstm",
            ModuleGroup::Heads => "heads",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockCost {
    pub name: String,
    pub group: ModuleGroup,
    /// cost of one application of this block
    pub flops_per_app: u64,
    /// how many times the block runs per team decision (3 for per-hero blocks)
    pub apps: u64,
    /// distinct parameters (weights are shared across heroes)
    pub params: u64,
}

impl BlockCost {
    pub fn flops(&self) -> u64 {
        self.flops_per_app * self.apps
    }
}

#[derive(Debug, Clone)]
pub struct CostBreakdown {
    pub blocks: Vec<BlockCost>,
}

impl CostBreakdown {
    pub fn total_flops(&self) -> u64 {
        self.blocks.iter().map(|b| b.flops()).sum()
    }

    pub fn total_params(&self) -> u64 {
        self.blocks.iter().map(|b| b.params).sum()
    }

    pub fn group_flops(&self, g: ModuleGroup) -> u64 {
        self.blocks.iter().filter(|b| b.group == g).map(|b| b.flops()).sum()
    }

    pub fn group_params(&self, g: ModuleGroup) -> u64 {
        self.blocks.iter().filter(|b| b.group == g).map(|b| b.params).sum()
    }

    pub fn block(&self, name: &str) -> Option<&BlockCost> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// CSV export: block,flops,params,flops_pct,params_pct.
    pub fn to_csv(&self) -> String {
        let tf = self.total_flops().max(1) as f64;
        let tp = self.total_params().max(1) as f64;
        let mut out = String::from("block,flops,params,flops_pct,params_pct\n");
        for b in &self.blocks {
            out.push_str(&format!(
                "{},{},{},{:.4},{:.4}\n",
                b.name,
                b.flops(),
                b.params,
                100.0 * b.flops() as f64 / tf,
                100.0 * b.params as f64 / tp
            ));
        }
        out.push_str(&format!("total,{},{},100.0000,100.0000\n", self.total_flops(), self.total_params()));
        out
    }
}

fn dense_cost(i: u64, o: u64) -> (u64, u64) {
    (i * o + o, i * o + o)
}

struct Builder {
    blocks: Vec<BlockCost>,
}

impl Builder {
    fn new() -> Self {
        Self { blocks: Vec::new() }
    }

    fn push(&mut self, name: &str, group: ModuleGroup, flops_per_app: u64, apps: u64, params: u64) {
        self.blocks.push(BlockCost { name: name.to_string(), group, flops_per_app, apps, params });
    }

    /// dense + relu applied to `units` rows
    fn dense_relu(&mut self, name: &str, group: ModuleGroup, units: u64, i: u64, o: u64, apps: u64) {
        let (f, p) = dense_cost(i, o);
        self.push(name, group, units * (f + o), apps, p);
    }

    /// dense without activation
    fn dense(&mut self, name: &str, group: ModuleGroup, units: u64, i: u64, o: u64, apps: u64) {
        let (f, p) = dense_cost(i, o);
        self.push(name, group, units * f, apps, p);
    }
}

/// Analytic profile of the teacher at a given schema; no network is built.
pub fn teacher_cost_breakdown(schema: &ObservationSchema) -> CostBreakdown {
    let d = TeacherDims::from_schema(schema);
    let mut b = Builder::new();
    let apps = HEROES_PER_TEAM as u64;
    let (_, ih, iw) = schema.image;
    let positions = (ih * iw) as u64;
    let c_in = schema.image.0 as u64;
    let c_out = d.conv_out as u64;
    let td = d.token_dim as u64;
    let ffn = d.ffn_dim as u64;
    let n_tok = TEACHER_TOKENS as u64;

    // conv + relu
    let conv_flops = c_out * positions * (c_in * 25 + 1) + c_out * positions;
    b.push("conv", ModuleGroup::Cnn, conv_flops, apps, c_out * c_in * 25 + c_out);
    // image token: flatten -> img_hidden -> token (relu each)
    let img_flat = c_out * positions;
    b.dense_relu("img.l1", ModuleGroup::Extractor, 1, img_flat, d.img_hidden as u64, apps);
    b.dense_relu("img.l2", ModuleGroup::Extractor, 1, d.img_hidden as u64, td, apps);
    let unit_cat = |b: &mut Builder, name: &str, count: u64, fd: u64, hidden: u64| {
        b.dense_relu(&format!("ext.{name}.l1"), ModuleGroup::Extractor, count, fd, hidden, apps);
        b.dense_relu(&format!("ext.{name}.l2"), ModuleGroup::Extractor, count, hidden, td, apps);
    };
    unit_cat(&mut b, "heroes", schema.heroes.0 as u64, schema.heroes.1 as u64, d.unit_hidden as u64);
    unit_cat(&mut b, "soldiers", schema.soldiers.0 as u64, schema.soldiers.1 as u64, d.unit_hidden as u64);
    unit_cat(&mut b, "turrets", schema.turrets.0 as u64, schema.turrets.1 as u64, d.unit_hidden as u64);
    unit_cat(&mut b, "monsters", schema.monsters.0 as u64, schema.monsters.1 as u64, d.unit_hidden as u64);
    unit_cat(&mut b, "current", 1, schema.current_hero as u64, d.small_hidden as u64);
    unit_cat(&mut b, "whole", 1, schema.whole_info as u64, d.small_hidden as u64);

    // encoder: per layer MHA + FFN(4d) with relu
    let mha_flops = 4 * n_tok * td * td + 2 * n_tok * n_tok * td + n_tok * td * td;
    let mha_params = 4 * (td * td + td);
    let ffn1 = dense_cost(td, ffn);
    let ffn2 = dense_cost(ffn, td);
    for l in 0..TEACHER_ENC_LAYERS {
        b.push(&format!("enc{l}.mha"), ModuleGroup::Encoder, mha_flops, apps, mha_params);
        b.push(
            &format!("enc{l}.ffn"),
            ModuleGroup::Encoder,
            n_tok * (ffn1.0 + ffn) + n_tok * ffn2.0,
            apps,
            ffn1.1 + ffn2.1,
        );
    }
    // avg pool + post dense + relu
    b.push("token_pool", ModuleGroup::Fusion, n_tok * td, apps, 0);
    b.dense_relu("post", ModuleGroup::Fusion, 1, td, d.post_dim as u64, apps);
    // gate runs once per team step
    b.push("gate", ModuleGroup::Gate, (HEROES_PER_TEAM * d.public_dim) as u64, 1, 0);
    // lstm cell: flops == params by convention
    let lstm = d.lstm();
    b.push("lstm", ModuleGroup::Lstm, lstm.param_count() as u64, apps, lstm.param_count() as u64);
    // heads
    let lstm_h = d.lstm_hidden as u64;
    let head_outs: [(&str, u64); 5] = [
        ("button", BUTTON_DIM as u64),
        ("move", MOVE_DIM as u64),
        ("ox", OFFSET_DIM as u64),
        ("oz", OFFSET_DIM as u64),
        ("value", 1),
    ];
    for (name, out) in head_outs {
        b.dense_relu(&format!("head.{name}.fc"), ModuleGroup::Heads, 1, lstm_h, td, apps);
        b.dense(&format!("head.{name}.out"), ModuleGroup::Heads, 1, td, out, apps);
    }
    b.dense_relu("head.target.fc", ModuleGroup::Heads, 1, lstm_h, td, apps);
    b.dense("target.query", ModuleGroup::Heads, 1, td, td, apps);
    b.dense("target.key", ModuleGroup::Heads, TARGET_KEY_SLOTS as u64, td, td, apps);
    b.push("target.none_key", ModuleGroup::Heads, 0, apps, td);
    b.push("target.scores", ModuleGroup::Heads, TARGET_DIM as u64 * td, apps, 0);
    CostBreakdown { blocks: b.blocks }
}

/// Analytic profile of a student design at a schema; no network is built.
pub fn student_cost_breakdown(design: &DesignPoint, schema: &ObservationSchema) -> Result<CostBreakdown> {
    design.validate()?;
    let dims = StudentDims::derive(design, schema);
    let mut b = Builder::new();
    let apps = HEROES_PER_TEAM as u64;
    let positions = dims.positions as u64;
    let c_in = schema.image.0 as u64;
    let c_out = dims.conv_out as u64;
    let td = design.token_dim as u64;
    let ad = design.attention_dim as u64;

    let conv_flops = c_out * positions * (c_in * 25 + 1) + c_out * positions;
    b.push("conv", ModuleGroup::Cnn, conv_flops, apps, c_out * c_in * 25 + c_out);
    // pointwise image MLP over positions, then spatial max-pool
    let mut prev = c_out;
    for (i, w) in design.img_widths.iter().enumerate() {
        b.dense_relu(&format!("img.l{i}"), ModuleGroup::Extractor, positions, prev, *w as u64, apps);
        prev = *w as u64;
    }
    b.push("img.pool", ModuleGroup::Extractor, positions * prev, apps, 0);
    // shared token embedders
    let cats: [(&str, u64, u64); 4] = [
        ("heroes", schema.heroes.0 as u64, schema.heroes.1 as u64),
        ("soldiers", schema.soldiers.0 as u64, schema.soldiers.1 as u64),
        ("turrets", schema.turrets.0 as u64, schema.turrets.1 as u64),
        ("monsters", schema.monsters.0 as u64, schema.monsters.1 as u64),
    ];
    for (name, count, fd) in cats {
        b.dense_relu(&format!("embed.{name}"), ModuleGroup::Extractor, count, fd, td, apps);
    }
    // role transform on hero tokens
    let mut prev = td;
    for (i, w) in design.role_widths.iter().enumerate() {
        b.dense_relu(&format!("role.l{i}"), ModuleGroup::Extractor, schema.heroes.0 as u64, prev, *w as u64, apps);
        prev = *w as u64;
    }
    // per-category set-max-pool
    let pool_elems = schema.heroes.0 as u64 * dims.role_out as u64
        + schema.soldiers.0 as u64 * td
        + schema.turrets.0 as u64 * td
        + schema.monsters.0 as u64 * td;
    b.push("cat.pool", ModuleGroup::Extractor, pool_elems, apps, 0);
    // concat fusion
    let mut prev = dims.concat_in as u64;
    for (i, w) in design.concat_widths.iter().enumerate() {
        b.dense_relu(&format!("cat.l{i}"), ModuleGroup::Fusion, 1, prev, *w as u64, apps);
        prev = *w as u64;
    }
    // triplet max-fusion gate: once per team decision
    b.push("gate", ModuleGroup::Gate, (HEROES_PER_TEAM * dims.public_dim) as u64, 1, 0);
    // communicate block
    let mut prev = dims.cat_out as u64;
    for (i, w) in design.comm_widths.iter().enumerate() {
        b.dense_relu(&format!("comm.l{i}"), ModuleGroup::Fusion, 1, prev, *w as u64, apps);
        prev = *w as u64;
    }
    // heads
    let fdim = dims.final_dim as u64;
    let afc = design.action_fc as u64;
    let head_outs: [(&str, u64); 4] = [
        ("button", BUTTON_DIM as u64),
        ("move", MOVE_DIM as u64),
        ("ox", OFFSET_DIM as u64),
        ("oz", OFFSET_DIM as u64),
    ];
    for (name, out) in head_outs {
        b.dense_relu(&format!("head.{name}.fc"), ModuleGroup::Heads, 1, fdim, afc, apps);
        b.dense(&format!("head.{name}.out"), ModuleGroup::Heads, 1, afc, out, apps);
    }
    b.dense("target.query", ModuleGroup::Heads, 1, fdim, ad, apps);
    b.dense("target.key", ModuleGroup::Heads, TARGET_KEY_SLOTS as u64, td, ad, apps);
    b.push("target.none_key", ModuleGroup::Heads, 0, apps, ad);
    b.push("target.scores", ModuleGroup::Heads, TARGET_DIM as u64 * ad, apps, 0);
    Ok(CostBreakdown { blocks: b.blocks })
}

/// Total FLOPs of one team decision for a design.
pub fn estimate_flops(design: &DesignPoint, schema: &ObservationSchema) -> Result<u64> {
    Ok(student_cost_breakdown(design, schema)?.total_flops())
}

pub fn count_params(design: &DesignPoint, schema: &ObservationSchema) -> Result<u64> {
    Ok(student_cost_breakdown(design, schema)?.total_params())
}

/// One step of a forward schedule for peak-memory accounting.
#[derive(Debug, Clone)]
pub struct ScheduleStep {
    /// elements allocated at this step
    pub alloc: usize,
    /// elements freed after this step completes
    pub free: usize,
}

/// Peak memory in MB (2^20 bytes): 4 bytes per parameter plus 4 bytes per
/// element of the largest simultaneously-live activation set.
pub fn peak_memory_mb(params: usize, schedule: &[ScheduleStep]) -> f64 {
    let mut live = 0usize;
    let mut peak = 0usize;
    for s in schedule {
        live += s.alloc;
        peak = peak.max(live);
        live = live.saturating_sub(s.free);
    }
    ((params * 4) as f64 + (peak * 4) as f64) / (1u64 << 20) as f64
}

/// Forward schedule of a student team decision, mirroring the implementation:
/// three trunks are evaluated with tokens retained for target scoring, then
/// the gate, communicate block and heads run.
pub fn student_schedule(design: &DesignPoint, schema: &ObservationSchema) -> Vec<ScheduleStep> {
    let dims = StudentDims::derive(design, schema);
    let h = HEROES_PER_TEAM;
    let positions = dims.positions;
    let td = design.token_dim;
    let units: usize = schema.heroes.0 + schema.soldiers.0 + schema.turrets.0 + schema.monsters.0;
    let mut steps = Vec::new();
    let input = h * schema.per_hero_total();
    steps.push(ScheduleStep { alloc: input, free: 0 });
    // conv im2col + position rows
    let plen = schema.image.0 * 25;
    steps.push(ScheduleStep { alloc: h * positions * plen, free: 0 });
    let mut prev = h * positions * dims.conv_out;
    steps.push(ScheduleStep { alloc: prev, free: h * positions * plen });
    for w in &design.img_widths {
        let out = h * positions * w;
        steps.push(ScheduleStep { alloc: out, free: prev });
        prev = out;
    }
    // spatial pool
    steps.push(ScheduleStep { alloc: h * dims.img_out, free: prev });
    // tokens (retained until target scoring)
    let tokens = h * units * td;
    steps.push(ScheduleStep { alloc: tokens, free: 0 });
    // role chain on hero tokens
    let mut prev = 0usize;
    for w in &design.role_widths {
        let out = h * schema.heroes.0 * w;
        steps.push(ScheduleStep { alloc: out, free: prev });
        prev = out;
    }
    // category pools
    let pools = h * (dims.role_out + 3 * td);
    steps.push(ScheduleStep { alloc: pools, free: prev });
    // concat input (frees the obs block, image embedding and pools)
    steps.push(ScheduleStep { alloc: h * dims.concat_in, free: input + h * dims.img_out + pools });
    let mut prev = h * dims.concat_in;
    for w in &design.concat_widths {
        let out = h * w;
        steps.push(ScheduleStep { alloc: out, free: prev });
        prev = out;
    }
    // gate + comm input
    steps.push(ScheduleStep { alloc: dims.public_dim + h * dims.cat_out, free: prev });
    let mut prev = h * dims.cat_out + dims.public_dim;
    for w in &design.comm_widths {
        let out = h * w;
        steps.push(ScheduleStep { alloc: out, free: prev });
        prev = out;
    }
    // heads: hidden + logits per head, then target keys/scores
    let logits = h * (BUTTON_DIM + MOVE_DIM + 2 * OFFSET_DIM + TARGET_DIM);
    steps.push(ScheduleStep { alloc: h * design.action_fc + logits, free: 0 });
    steps.push(ScheduleStep {
        alloc: h * (design.attention_dim + TARGET_KEY_SLOTS * design.attention_dim),
        free: tokens,
    });
    steps.push(ScheduleStep { alloc: 0, free: 0 });
    steps
}

/// Analytic peak memory of a student team decision.
pub fn student_peak_memory_mb(design: &DesignPoint, schema: &ObservationSchema) -> Result<f64> {
    let params = count_params(design, schema)? as usize;
    Ok(peak_memory_mb(params, &student_schedule(design, schema)))
}

#[derive(Debug, Clone, Copy)]
pub struct LatencyReport {
    pub median_ms: f64,
    pub iqr_ms: f64,
    pub runs: usize,
}

/// Median single-decision wall time over `n_runs` calls of `f`, discarding
/// the first 10% as warmup. Single-threaded by contract.
pub fn measure_latency<F: FnMut()>(mut f: F, n_runs: usize) -> Result<LatencyReport> {
    if n_runs < 100 {
        return Err(Error::InvalidArgument(format!("latency needs n_runs >= 100, got {n_runs}")));
    }
    let warmup = n_runs / 10;
    let mut samples = Vec::with_capacity(n_runs - warmup);
    for i in 0..n_runs {
        let t0 = std::time::Instant::now();
        f();
        let dt = t0.elapsed().as_secs_f64() * 1e3;
        if i >= warmup {
            samples.push(dt);
        }
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| -> f64 {
        let idx = (p * (samples.len() - 1) as f64).round() as usize;
        samples[idx]
    };
    Ok(LatencyReport { median_ms: q(0.5), iqr_ms: q(0.75) - q(0.25), runs: n_runs })
}

/// Measured latency of a student team decision over fixed frames.
pub fn measure_student_latency(
    net: &StudentNet<f32>,
    groups: &[Vec<f32>],
    n_runs: usize,
) -> Result<LatencyReport> {
    if groups.is_empty() {
        return Err(Error::Empty("latency frames".into()));
    }
    let mut cache = crate::student::ForwardCache::empty();
    let mut i = 0usize;
    // prime buffers outside the timed region
    forward_once(net, &groups[0], &mut cache)?;
    measure_latency(
        || {
            let g = &groups[i % groups.len()];
            i += 1;
            forward_once(net, g, &mut cache).expect("forward");
        },
        n_runs,
    )
}

fn forward_once(net: &StudentNet<f32>, group: &[f32], cache: &mut crate::student::ForwardCache<f32>) -> Result<()> {
    crate::student::forward_chunk(net, &[group], cache)
}

/// Deterministic latency proxy used by reproducibility runs: FLOPs scaled by
/// a nominal host throughput.
pub const DETERMINISTIC_LATENCY_FLOPS_PER_MS: f64 = 2.0e7;

pub fn deterministic_latency_ms(flops: u64) -> f64 {
    flops as f64 / DETERMINISTIC_LATENCY_FLOPS_PER_MS
}

/// Energy model calibrated to the published teacher row: 7.62 mAh per 5000
/// inferences at 681.84 MFLOPs. The ratio form keeps the calibration identity
/// bit-exact; the implied coefficient is 7.62/(5000*681.84e6) mAh per FLOP.
#[derive(Debug, Clone, Copy)]
pub struct EnergyModel {
    pub base_mah: f64,
    pub base_flops: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self { base_mah: 7.62, base_flops: 681.84e6 }
    }
}

impl EnergyModel {
    /// mAh per 5000 inferences for a per-decision FLOPs count.
    pub fn energy_mah(&self, flops: f64) -> f64 {
        self.base_mah * (flops / self.base_flops)
    }
}

pub fn model_energy(flops: f64) -> f64 {
    EnergyModel::default().energy_mah(flops)
}

/// Reference FLOPs of the published full-scale teacher, used for budget
/// anchoring in the sampler.
pub const PAPER_TEACHER_FLOPS: f64 = 681.84e6;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_schema;
    use crate::student::build_student;
    use crate::teacher::build_teacher;

    #[test]
    fn dense_flop_example() {
        // dense 1024 -> 1024: 1,049,600 FLOPs
        assert_eq!(dense_cost(1024, 1024).0, 1_049_600);
    }

    #[test]
    fn teacher_lstm_row_matches_paper_sizing() {
        let schema = make_schema(1.0).unwrap();
        let bd = teacher_cost_breakdown(&schema);
        let lstm = bd.block("lstm").unwrap();
        assert_eq!(lstm.params, 8_392_704);
        assert_eq!(lstm.flops_per_app, lstm.params);
    }

    #[test]
    fn teacher_profile_shape_at_scale_one() {
        let schema = make_schema(1.0).unwrap();
        let bd = teacher_cost_breakdown(&schema);
        let total_params = bd.total_params();
        assert!(
            (14_800_000..=18_100_000).contains(&total_params),
            "teacher params {total_params}"
        );
        let enc_share = bd.group_flops(ModuleGroup::Encoder) as f64 / bd.total_flops() as f64;
        assert!(enc_share > 0.70, "encoder flops share {enc_share:.3}");
        let lstm_share = bd.group_params(ModuleGroup::Lstm) as f64 / total_params as f64;
        assert!(lstm_share > 0.45, "lstm param share {lstm_share:.3}");
    }

    #[test]
    fn analytic_params_match_built_networks() {
        let schema = make_schema(0.1).unwrap();
        let teacher = build_teacher(&schema, 3).unwrap();
        assert_eq!(teacher_cost_breakdown(&schema).total_params(), teacher.param_count() as u64);
        let design = DesignPoint {
            token_dim: 48,
            attention_dim: 40,
            role_widths: vec![64, 48],
            img_widths: vec![96, 64],
            concat_widths: vec![256, 128, 64],
            comm_widths: vec![96],
            action_fc: 64,
        };
        let net = build_student::<f32>(&design, &schema, 7).unwrap();
        assert_eq!(count_params(&design, &schema).unwrap(), net.param_count() as u64);
    }

    #[test]
    fn breakdown_shares_sum_to_hundred() {
        let schema = make_schema(0.25).unwrap();
        let bd = teacher_cost_breakdown(&schema);
        let csv = bd.to_csv();
        let mut fsum = 0.0;
        let mut psum = 0.0;
        for line in csv.lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells[0] == "total" {
                continue;
            }
            fsum += cells[3].parse::<f64>().unwrap();
            psum += cells[4].parse::<f64>().unwrap();
        }
        assert!((fsum - 100.0).abs() < 0.01, "flops shares sum {fsum}");
        assert!((psum - 100.0).abs() < 0.01, "params shares sum {psum}");
    }

    #[test]
    fn flops_monotone_in_every_width() {
        let schema = make_schema(0.25).unwrap();
        let base = DesignPoint {
            token_dim: 64,
            attention_dim: 64,
            role_widths: vec![64, 64],
            img_widths: vec![64, 64],
            concat_widths: vec![64, 64, 64],
            comm_widths: vec![64, 64],
            action_fc: 64,
        };
        let f0 = estimate_flops(&base, &schema).unwrap();
        let mut bump = |f: &mut dyn FnMut(&mut DesignPoint)| {
            let mut d = base.clone();
            f(&mut d);
            assert!(estimate_flops(&d, &schema).unwrap() > f0, "not monotone");
        };
        bump(&mut |d| d.token_dim += 8);
        bump(&mut |d| d.attention_dim += 8);
        bump(&mut |d| d.role_widths[0] += 8);
        bump(&mut |d| d.role_widths[1] += 8);
        bump(&mut |d| d.img_widths[0] += 8);
        bump(&mut |d| d.img_widths[1] += 8);
        bump(&mut |d| d.concat_widths[0] += 8);
        bump(&mut |d| d.concat_widths[2] += 8);
        bump(&mut |d| d.comm_widths[0] += 8);
        bump(&mut |d| d.action_fc += 8);
    }

    #[test]
    fn single_dense_memory_formula() {
        // one dense 10->10 with a 10-wide input:
        // (110 params * 4 + (10 + 10) * 4) / 2^20 MB
        let schedule = vec![
            ScheduleStep { alloc: 10, free: 0 },
            ScheduleStep { alloc: 10, free: 0 },
        ];
        let mb = peak_memory_mb(110, &schedule);
        let expect = (110.0 * 4.0 + 20.0 * 4.0) / (1u64 << 20) as f64;
        assert!((mb - expect).abs() < 1e-12);
    }

    #[test]
    fn memory_monotone_when_block_removed() {
        let schema = make_schema(0.25).unwrap();
        let big = DesignPoint {
            token_dim: 64,
            attention_dim: 48,
            role_widths: vec![96],
            img_widths: vec![128, 64],
            concat_widths: vec![512, 256],
            comm_widths: vec![128, 64],
            action_fc: 96,
        };
        let mut smaller = big.clone();
        smaller.comm_widths = vec![128];
        let a = student_peak_memory_mb(&big, &schema).unwrap();
        let b = student_peak_memory_mb(&smaller, &schema).unwrap();
        assert!(a >= b, "{a} < {b}");
    }

    #[test]
    fn energy_calibration_identity() {
        assert_eq!(model_energy(681.84e6), 7.62);
        assert_eq!(model_energy(0.0), 0.0);
        // FA row cross-check: within 15% of 0.49 mAh
        let fa = model_energy(45.74e6);
        assert!((fa - 0.49).abs() / 0.49 < 0.15, "fa energy {fa}");
    }

    #[test]
    fn latency_harness_basics() {
        assert!(measure_latency(|| {}, 50).is_err());
        let r = measure_latency(|| std::hint::black_box((0..500).sum::<u64>()), 120).unwrap();
        assert!(r.median_ms >= 0.0);
        assert!(r.iqr_ms >= 0.0);
        assert_eq!(r.runs, 120);
    }
}
