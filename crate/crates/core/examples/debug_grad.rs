use pddl_core::dataset::{generate_records, DatasetRecord};
use pddl_core::env::{make_schema, HEROES_PER_TEAM};
use pddl_core::nn::masked_temperature_softmax_vec;
use pddl_core::student::{backward_chunk, build_student, forward_chunk, DesignPoint, ForwardCache};
use pddl_core::teacher::build_teacher;
use pddl_core::trainer::chunk_loss_and_grads;

fn main() {
    let schema = make_schema(0.05).unwrap();
    let teacher = build_teacher(&schema, 7).unwrap();
    let ds = generate_records(&teacher, &schema, 19, 16).unwrap();
    let recs: Vec<&DatasetRecord> = ds.records[0..4].iter().collect();
    let groups: Vec<&[f32]> = recs.iter().map(|r| r.obs.as_slice()).collect();
    let net32 = build_student::<f32>(&DesignPoint::minimal(), &schema, 3).unwrap();
    let mut net = net32.cast::<f64>();
    let tau = 4.0f64;
    let scale = 1.0f64 / (5 * recs.len()) as f64;

    // student logits sanity: do button logits vary across records?
    let mut cache = ForwardCache::empty();
    forward_chunk(&net, &groups, &mut cache).unwrap();
    for r in 0..2 {
        let row = r * HEROES_PER_TEAM + recs[r].hero_index as usize;
        println!("rec {r} student button logits: {:?}", &cache.logits[0].row(row)[..6]);
        println!("rec {r} teacher button logits: {:?}", &recs[r].logits[..6]);
    }

    let (_, d) = chunk_loss_and_grads(&recs, &cache.logits, tau, scale).unwrap();
    let mut grads = vec![0.0f64; net.param_count()];
    backward_chunk(&net, &groups, &mut cache, &d, &mut grads).unwrap();

    let loss_fn = |net: &mut pddl_core::student::StudentNet<f64>, groups: &[&[f32]]| -> f64 {
        let mut c = ForwardCache::empty();
        forward_chunk(net, groups, &mut c).unwrap();
        let mut total = 0.0;
        for (r, rec) in recs.iter().enumerate() {
            let row = r * HEROES_PER_TEAM + rec.hero_index as usize;
            let b = pddl_core::teacher::masked_argmax(rec.head_logits()[0], &rec.masks.button).unwrap();
            let masks = rec.masks.head_masks(b);
            let tl = rec.head_logits();
            for k in 0..5 {
                let t: Vec<f64> = tl[k].iter().map(|v| *v as f64).collect();
                let p = masked_temperature_softmax_vec(&t, &masks[k], tau).unwrap();
                let q = masked_temperature_softmax_vec(c.logits[k].row(row), &masks[k], tau).unwrap();
                for i in 0..p.len() {
                    if masks[k][i] && p[i] > 0.0 {
                        total += p[i] * (p[i] / q[i]).ln();
                    }
                }
            }
        }
        total * scale
    };

    // per-block worst relative error
    let blocks: Vec<(String, usize, usize)> = net
        .params
        .blocks()
        .iter()
        .map(|b| (b.name.clone(), b.offset, b.len))
        .collect();
    let h = 1e-5;
    for (name, off, len) in &blocks {
        let mut worst = 0.0f64;
        let mut worst_pair = (0.0, 0.0);
        for j in 0..3.min(*len) {
            let i = off + (j * 37) % len;
            let orig = net.params.data()[i];
            net.params.data_mut()[i] = orig + h;
            let fp = loss_fn(&mut net, &groups);
            net.params.data_mut()[i] = orig - h;
            let fm = loss_fn(&mut net, &groups);
            net.params.data_mut()[i] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = grads[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
                worst_pair = (analytic, numeric);
            }
        }
        if worst > 1e-5 {
            println!("{name:24} worst rel {worst:.3e}  (analytic {:.6e}, numeric {:.6e})", worst_pair.0, worst_pair.1);
        }
    }
    println!("done");
}
