use dedem::optimizer::{train, TrainInit, TrainOptions};
use dedem::scenario::parse_scenario;

const SMALL_PATCH: &str = r#"
mode = "plane_stress"
seed = 9

[domain]
x = [0.0, 1.0]
y = [0.0, 1.0]

[material.m]
e = 100.0
nu = 0.3
region = "whole"

[constraint.u1]
A = "x1"
B = "0"

[constraint.u2]
A = "x2"
B = "0"

[traction.top]
t1 = "0"
t2 = "10"

[train]
width = 8
blocks = 1
max_epochs = 8000
patience = 1500

[grid]
nx = 21
ny = 21
"#;

fn main() {
    let scenario = parse_scenario::<f64>(SMALL_PATCH).unwrap();
    let report = train(&scenario, TrainInit::FromSeed, TrainOptions { threads: 1, log_every: Some(500) }).unwrap();
    eprintln!("best epoch {} best loss {} epochs run {}", report.best_epoch, report.best_loss, report.losses.len());
}
