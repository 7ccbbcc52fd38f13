//! Shared oracles for the integration tests.
#![allow(dead_code)]

use meta_sicnet::numerics::{grad_through_inner_step, GradOrder, Objective};
use meta_sicnet::phy::{bpsk, superpose_indices, Pilot};
use meta_sicnet::sicnet::{build_default, CombinedLoss, Reduction};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

pub fn q(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Per-device SER of classic SIC for BPSK, powers (4, 1), h = +1.
pub fn sic_closed_form(sigma2: f64) -> [f64; 2] {
    let s = (sigma2 / 2.0).sqrt();
    [
        0.5 * (q(1.0 / s) + q(3.0 / s)),
        0.5 * (3.0 * q(1.0 / s) - 2.0 * q(3.0 / s) + q(5.0 / s)),
    ]
}

/// Brute-force SER by integrating the SIC error indicator over the real
/// noise density. Decisions are made with explicit nearest-point rules,
/// independently of the library detector.
pub fn sic_integrated(sigma2: f64) -> [f64; 2] {
    let s = (sigma2 / 2.0).sqrt();
    let span = (12.0 * s).ceil();
    let per_unit = 20_000usize;
    let steps = 2 * span as usize * per_unit;
    let dx = 1.0 / per_unit as f64;
    let mut out = [0.0; 2];
    for (x1, x2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        let x: f64 = 2.0 * x1 + x2;
        for k in 0..steps {
            let n = -span + (k as f64 + 0.5) * dx;
            let w = (-(n * n) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()) * dx;
            let y = x + n;
            let d1 = if y >= 0.0 { 1.0 } else { -1.0 };
            let r = y - 2.0 * d1;
            let d2 = if r >= 0.0 { 1.0 } else { -1.0 };
            if d1 != x1 {
                out[0] += 0.25 * w;
            }
            if d2 != x2 {
                out[1] += 0.25 * w;
            }
        }
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Random pilots with labels and samples spread over the composite range.
pub fn random_pilots(rng: &mut ChaCha8Rng, n: usize, h: f64, noise: f64) -> Vec<Pilot> {
    let b = bpsk();
    (0..n)
        .map(|_| {
            let symbols = vec![rng.random_range(0..2), rng.random_range(0..2)];
            let x = superpose_indices(&b, &symbols, &[4.0, 1.0]);
            let y = Complex64::new(h * x.re + noise * (rng.random::<f64>() - 0.5), noise * (rng.random::<f64>() - 0.5));
            Pilot { symbols, y }
        })
        .collect()
}

pub struct FdStats {
    pub instances: usize,
    pub coordinates: usize,
    pub worst: f64,
}

/// Central differences of the combined loss on random models and pilots.
pub fn fd_combined(instances: usize, coords: usize, seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let eps = 1e-5;
    for i in 0..instances {
        let mut model = build_default(seed.wrapping_mul(1000) + i as u64);
        let scale = 0.5 + 2.0 * rng.random::<f64>();
        model.theta.iter_mut().for_each(|v| *v *= scale);
        let reduction = if i % 2 == 0 { Reduction::Mean } else { Reduction::Sum };
        let obj = CombinedLoss::with_reduction(&model.arch, reduction);
        let n = rng.random_range(1..6);
        let h = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let pilots = random_pilots(&mut rng, n, h, 3.0);
        let grad = obj.grad(&model.theta, &pilots);
        for _ in 0..coords {
            let j = rng.random_range(0..model.theta.len());
            let mut p = model.theta.clone();
            p[j] += eps;
            let up = obj.loss(&p, &pilots);
            p[j] -= 2.0 * eps;
            let down = obj.loss(&p, &pilots);
            worst = worst.max(rel_err(grad[j], (up - down) / (2.0 * eps)));
        }
    }
    FdStats {
        instances,
        coordinates: instances * coords,
        worst,
    }
}

/// Central differences of `θ ↦ L_out(θ − β∇L_in(θ))` against the exact
/// gradient through the inner step.
pub fn fd_composed(instances: usize, coords: usize, seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let eps = 1e-5;
    for i in 0..instances {
        let model = build_default(seed.wrapping_mul(1000) + 500 + i as u64);
        let obj = CombinedLoss::new(&model.arch);
        let beta = [0.001, 0.01, 0.1, 0.5][i % 4];
        let h = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let inner = random_pilots(&mut rng, 4, h, 2.0);
        let outer = random_pilots(&mut rng, 4, h, 2.0);
        let g = grad_through_inner_step(&obj, &model.theta, &inner, &outer, beta, GradOrder::Second).unwrap();
        let composed = |p: &[f64]| {
            let gi = obj.grad(p, &inner);
            let adapted: Vec<f64> = p.iter().zip(&gi).map(|(a, b)| a - beta * b).collect();
            obj.loss(&adapted, &outer)
        };
        for _ in 0..coords {
            let j = rng.random_range(0..model.theta.len());
            let mut p = model.theta.clone();
            p[j] += eps;
            let up = composed(&p);
            p[j] -= 2.0 * eps;
            let down = composed(&p);
            worst = worst.max(rel_err(g[j], (up - down) / (2.0 * eps)));
        }
    }
    FdStats {
        instances,
        coordinates: instances * coords,
        worst,
    }
}
