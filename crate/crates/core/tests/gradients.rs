mod common;

use common::{fd_combined, fd_composed, random_pilots, rel_err};
use meta_sicnet::numerics::{grad_through_inner_step, hessian_vector_product, GradOrder, Objective};
use meta_sicnet::sicnet::{build_default, CombinedLoss};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn combined_loss_gradient_matches_central_differences() {
    let s = fd_combined(120, 12, 1);
    assert!(s.worst < 1e-4, "worst relative error {} over {} coordinates", s.worst, s.coordinates);
}

#[test]
fn gradient_through_inner_step_matches_composed_differences() {
    let s = fd_composed(24, 10, 2);
    assert!(s.worst < 1e-3, "worst relative error {}", s.worst);
}

#[test]
fn first_order_drops_only_the_hessian_term() {
    let model = build_default(4);
    let obj = CombinedLoss::new(&model.arch);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inner = random_pilots(&mut rng, 4, 1.0, 2.0);
    let outer = random_pilots(&mut rng, 4, 1.0, 2.0);
    let beta = 0.1;
    let g2 = grad_through_inner_step(&obj, &model.theta, &inner, &outer, beta, GradOrder::Second).unwrap();
    let g1 = grad_through_inner_step(&obj, &model.theta, &inner, &outer, beta, GradOrder::First).unwrap();
    let hv = hessian_vector_product(&obj, &model.theta, &inner, &g1);
    for i in 0..g1.len() {
        assert!((g2[i] - (g1[i] - beta * hv[i])).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The Hessian-vector product agrees with differences of gradients.
    #[test]
    fn hvp_matches_gradient_differences(seed in 0u64..1000, dir_seed in 0u64..1000) {
        let model = build_default(seed);
        let obj = CombinedLoss::new(&model.arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
        let batch = random_pilots(&mut rng, 3, -1.0, 2.0);
        let v = build_default(dir_seed).theta;
        let hv = hessian_vector_product(&obj, &model.theta, &batch, &v);
        let eps = 1e-6;
        let shift = |s: f64| -> Vec<f64> { model.theta.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
        let gp = obj.grad(&shift(eps), &batch);
        let gm = obj.grad(&shift(-eps), &batch);
        let norm = hv.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-6);
        let diff = hv.iter().zip(gp.iter().zip(&gm)).map(|(h, (a, b))| (h - (a - b) / (2.0 * eps)).powi(2)).sum::<f64>().sqrt();
        prop_assert!(diff / norm < 1e-4, "relative {}", diff / norm);
    }

    /// Scaling a mean-reduced batch by duplication leaves loss and gradient unchanged.
    #[test]
    fn mean_loss_invariant_to_duplication(seed in 0u64..1000) {
        let model = build_default(seed);
        let obj = CombinedLoss::new(&model.arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = random_pilots(&mut rng, 3, 1.0, 1.0);
        let doubled: Vec<_> = batch.iter().chain(&batch).cloned().collect();
        let (l1, g1) = obj.loss_and_grad(&model.theta, &batch);
        let (l2, g2) = obj.loss_and_grad(&model.theta, &doubled);
        prop_assert!(rel_err(l1, l2) < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
