use pddl_core::dataset::generate_records;
use pddl_core::env::make_schema;
use pddl_core::student::{build_student, DesignPoint};
use pddl_core::teacher::{build_teacher, masked_argmax};
use pddl_core::trainer::{chance_level_button, evaluate_student, train_student, TrainConfig};

fn main() {
    let t0 = std::time::Instant::now();
    let schema = make_schema(0.25).unwrap();
    let teacher = build_teacher(&schema, 56).unwrap();
    println!("[{:?}] teacher built, {} params, gain {}", t0.elapsed(), teacher.param_count(), teacher.calibration_gain);
    let train = generate_records(&teacher, &schema, 123, 2048).unwrap();
    let val = generate_records(&teacher, &schema, 999, 512).unwrap();
    println!("[{:?}] data: {} train, {} val", t0.elapsed(), train.len(), val.len());

    // teacher button argmax distribution over val records
    let mut hist = [0usize; 13];
    for r in &val.records {
        let b = masked_argmax(r.head_logits()[0], &r.masks.button).unwrap();
        hist[b] += 1;
    }
    println!("teacher button argmax histogram: {hist:?}");
    println!("chance level: {:.4}", chance_level_button(&val));

    let design = DesignPoint {
        token_dim: 64,
        attention_dim: 48,
        role_widths: vec![96],
        img_widths: vec![128, 64],
        concat_widths: vec![512, 256],
        comm_widths: vec![128],
        action_fc: 96,
    };
    let mut net = build_student::<f32>(&design, &schema, 1).unwrap();
    println!("student params: {}", net.param_count());
    let r0 = evaluate_student(&net, &val, 1.0).unwrap();
    println!(
        "[{:?}] initial: val_kl {:.4}, button {:.3}, overall {:.3}",
        t0.elapsed(),
        r0.kl_overall,
        r0.agree_per_head[0],
        r0.overall_agreement
    );
    let mut cfg = TrainConfig::desk();
    cfg.t_max = 600;
    cfg.eval_every = 150;
    cfg.batch = 256;
    let hist2 = train_student(&mut net, &train, &val, &cfg).unwrap();
    for e in &hist2.entries {
        println!(
            "step {:5} loss {:.5} val_kl {:.4} button {:.3} move {:.3} target {:.3} overall {:.3}",
            e.step,
            e.train_loss,
            e.eval.kl_overall,
            e.eval.agree_per_head[0],
            e.eval.agree_per_head[1],
            e.eval.agree_per_head[4],
            e.eval.overall_agreement
        );
    }
    println!("[{:?}] done", t0.elapsed());
}
