//! Compares the analytic gradient of the two-block combined loss, and the
//! gradient through one inner SGD step, against central finite differences.
//!
//! cargo run --release --example gradient_check

use meta_sicnet::numerics::{grad_through_inner_step, GradOrder, Objective};
use meta_sicnet::phy::{bpsk, gen_target_pilots};
use meta_sicnet::sicnet::{build_default, CombinedLoss};

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn run_example() -> meta_sicnet::Result<f64> {
    let model = build_default(11);
    let obj = CombinedLoss::new(&model.arch);
    let pilots = gen_target_pilots(6, &bpsk(), &[4.0, 1.0], None, 6.0, 3)?.pilots;
    let (inner, outer) = pilots.split_at(3);

    let grad = obj.grad(&model.theta, &pilots);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for i in (0..model.theta.len()).step_by(37) {
        let mut p = model.theta.clone();
        p[i] += eps;
        let up = obj.loss(&p, &pilots);
        p[i] -= 2.0 * eps;
        let down = obj.loss(&p, &pilots);
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * eps)));
    }
    println!("combined loss: worst relative error {worst:.2e} over {} coordinates", model.theta.len().div_ceil(37));

    let beta = 0.05;
    let g2 = grad_through_inner_step(&obj, &model.theta, inner, outer, beta, GradOrder::Second)?;
    let composed = |p: &[f64]| {
        let g = obj.grad(p, inner);
        let adapted: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a - beta * b).collect();
        obj.loss(&adapted, outer)
    };
    let mut worst2: f64 = 0.0;
    for i in (0..model.theta.len()).step_by(53) {
        let mut p = model.theta.clone();
        p[i] += 1e-5;
        let up = composed(&p);
        p[i] -= 2e-5;
        let down = composed(&p);
        worst2 = worst2.max(rel_err(g2[i], (up - down) / 2e-5));
    }
    println!("through inner step: worst relative error {worst2:.2e}");
    Ok(worst.max(worst2))
}

fn main() -> meta_sicnet::Result<()> {
    run_example().map(|_| ())
}
