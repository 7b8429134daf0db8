//! Runs every distillation mode on the three-ring benchmark and prints the
//! comparison table.
//!
//! Settings are `key=value` arguments, e.g.
//! `cargo run --release --example rings_benchmark -- noise=0.25 p2_lr=1e-3 student=16,16 map=0:0,1:1`

use std::collections::HashMap;

use gpkt::data::{synth_rings, Split};
use gpkt::nn::{Activation, NetworkSpec, OptimizerConfig};
use gpkt::train::{compare_methods, ComparisonSetup, LayerGroupMapping, TrainData, TrainPlan};

fn main() -> gpkt::Result<()> {
    env_logger::init();
    let args: HashMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let get = |k: &str, d: &str| args.get(k).cloned().unwrap_or_else(|| d.to_string());
    let num = |k: &str, d: &str| get(k, d).parse::<f64>().expect(k);

    let dataset = synth_rings(400, 3, num("noise", "0.25"), num("data_seed", "7") as u64)?;
    let split = Split::new(dataset.len(), 0.5, 7)?;
    let data = TrainData::new(&dataset, &split)?;
    let hidden: Vec<(usize, Activation)> = get("student", "16")
        .split(',')
        .map(|w| (w.parse().expect("width"), Activation::Relu))
        .collect();
    let mapping = LayerGroupMapping::new(
        get("map", "0:1")
            .split(',')
            .map(|p| {
                let (s, t) = p.split_once(':').expect("student:teacher");
                (s.parse().expect("layer"), t.parse().expect("group"))
            })
            .collect(),
    );
    let mut plan = TrainPlan {
        batch_size: num("batch", "16") as usize,
        phase1_epochs: num("p1", "50") as usize,
        phase2_epochs: num("p2", "25") as usize,
        phase1_optimizer: OptimizerConfig::adam(num("p1_lr", "1e-2")),
        phase2_optimizer: OptimizerConfig::adam(num("p2_lr", "5e-4")),
        ..TrainPlan::default()
    };
    plan.prior.jitter = num("jitter", "1e-4");
    let setup = ComparisonSetup {
        teacher_spec: NetworkSpec::mlp(2, &[(64, Activation::Relu), (64, Activation::Relu)], 3)?,
        student_spec: NetworkSpec::mlp(2, &hidden, 3)?,
        teacher_plan: TrainPlan {
            seed: 1000,
            phase2_epochs: 100,
            phase2_optimizer: OptimizerConfig::adam(3e-3),
            ..TrainPlan::default()
        },
        plan,
        mapping,
        seeds: (1..=num("seeds", "5") as u64).collect(),
        jobs: 1,
    };
    let t = std::time::Instant::now();
    let cmp = compare_methods(&data, &setup)?;
    print!("{}", cmp.summary());
    eprintln!("elapsed {:?}", t.elapsed());
    Ok(())
}
