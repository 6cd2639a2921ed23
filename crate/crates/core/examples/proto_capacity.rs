use pddl_core::dataset::generate_records;
use pddl_core::env::make_schema;
use pddl_core::student::{build_student, DesignPoint};
use pddl_core::teacher::build_teacher;
use pddl_core::trainer::{train_student, TrainConfig};

fn main() {
    let t0 = std::time::Instant::now();
    let schema = make_schema(0.25).unwrap();
    let teacher = build_teacher(&schema, 56).unwrap();
    let train = generate_records(&teacher, &schema, 123, 4096).unwrap();
    let val = generate_records(&teacher, &schema, 999, 512).unwrap();
    println!("[{:?}] data ready", t0.elapsed());

    let designs = [
        ("tiny", DesignPoint {
            token_dim: 32,
            attention_dim: 32,
            role_widths: vec![32],
            img_widths: vec![32],
            concat_widths: vec![64],
            comm_widths: vec![],
            action_fc: 32,
        }),
        ("small", DesignPoint {
            token_dim: 48,
            attention_dim: 32,
            role_widths: vec![64],
            img_widths: vec![64, 32],
            concat_widths: vec![256, 128],
            comm_widths: vec![64],
            action_fc: 64,
        }),
        ("mid", DesignPoint {
            token_dim: 64,
            attention_dim: 48,
            role_widths: vec![96],
            img_widths: vec![128, 64],
            concat_widths: vec![512, 256],
            comm_widths: vec![128],
            action_fc: 96,
        }),
    ];
    for (name, d) in &designs {
        for seed in [1u64, 2] {
            let mut net = build_student::<f32>(d, &schema, seed).unwrap();
            let mut cfg = TrainConfig::desk();
            cfg.t_max = 300;
            cfg.eval_every = 300;
            cfg.batch = 256;
            cfg.seed = 56 + seed;
            let hist = train_student(&mut net, &train, &val, &cfg).unwrap();
            let last = hist.entries.last().unwrap();
            println!(
                "[{:?}] {name} seed {seed}: params {} init_kl {:.4} final_kl {:.4} button {:.3} overall {:.3}",
                t0.elapsed(),
                net.param_count(),
                hist.initial_val_kl(),
                last.eval.kl_overall,
                last.eval.agree_per_head[0],
                last.eval.overall_agreement
            );
        }
    }
}
