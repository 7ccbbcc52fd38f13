//! Differentiating an outer loss through one inner gradient step.
//!
//! For `θ' = θ − s ∇L_in(θ)` the exact gradient of `L_out(θ')` is
//! `(I − s H_in(θ)) ∇L_out(θ')`. The Hessian-vector product is obtained by
//! running the reverse pass over dual numbers (forward-over-reverse).

use serde::{Deserialize, Serialize};

use super::mlp::{backward, ce_generic, ce_logit_grad, forward_trace, MlpLayout};
use super::scalar::{Dual, Scalar};
use crate::error::{Error, Result};

/// A differentiable batch loss over a flat parameter vector.
pub trait Objective: Sync {
    type Example: Sync;

    /// Batch loss and its gradient, evaluated in scalar type `T`.
    fn loss_and_grad<T: Scalar>(&self, params: &[T], batch: &[Self::Example]) -> (T, Vec<T>);

    fn loss(&self, params: &[f64], batch: &[Self::Example]) -> f64 {
        self.loss_and_grad(params, batch).0
    }

    fn grad(&self, params: &[f64], batch: &[Self::Example]) -> Vec<f64> {
        self.loss_and_grad(params, batch).1
    }
}

/// Hessian of the batch loss at `params` applied to `direction`.
pub fn hessian_vector_product<O: Objective>(
    obj: &O,
    params: &[f64],
    batch: &[O::Example],
    direction: &[f64],
) -> Vec<f64> {
    let duals: Vec<Dual> = params
        .iter()
        .zip(direction)
        .map(|(p, d)| Dual::new(*p, *d))
        .collect();
    let (_, g) = obj.loss_and_grad(&duals, batch);
    g.into_iter().map(|x| x.d).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradOrder {
    /// Exact gradient including the `−s H v` correction.
    Second,
    /// Drops the Hessian term: the outer gradient at the adapted point.
    First,
}

/// Everything produced by one inner/outer evaluation.
#[derive(Clone, Debug)]
pub struct InnerOuter {
    pub adapted: Vec<f64>,
    pub outer_loss: f64,
    pub grad: Vec<f64>,
}

pub fn inner_outer<O: Objective>(
    obj: &O,
    params: &[f64],
    inner_batch: &[O::Example],
    outer_batch: &[O::Example],
    inner_step: f64,
    order: GradOrder,
) -> Result<InnerOuter> {
    if inner_batch.is_empty() {
        return Err(Error::EmptyBatch("inner batch"));
    }
    if outer_batch.is_empty() {
        return Err(Error::EmptyBatch("outer batch"));
    }
    let g_in = obj.grad(params, inner_batch);
    let adapted: Vec<f64> = params
        .iter()
        .zip(&g_in)
        .map(|(p, g)| p - inner_step * g)
        .collect();
    let (outer_loss, mut grad) = obj.loss_and_grad(&adapted, outer_batch);
    if order == GradOrder::Second && inner_step != 0.0 {
        let hv = hessian_vector_product(obj, params, inner_batch, &grad);
        for (g, h) in grad.iter_mut().zip(hv) {
            *g -= inner_step * h;
        }
    }
    Ok(InnerOuter {
        adapted,
        outer_loss,
        grad,
    })
}

/// `∇_θ L_outer(θ − s ∇_θ L_inner(θ))`.
pub fn grad_through_inner_step<O: Objective>(
    obj: &O,
    params: &[f64],
    inner_batch: &[O::Example],
    outer_batch: &[O::Example],
    inner_step: f64,
    order: GradOrder,
) -> Result<Vec<f64>> {
    inner_outer(obj, params, inner_batch, outer_batch, inner_step, order).map(|r| r.grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub input: Vec<f64>,
    pub label: usize,
}

/// Mean cross-entropy of a single softmax classifier.
#[derive(Clone, Debug)]
pub struct ClassifierLoss {
    pub layout: MlpLayout,
}

impl Objective for ClassifierLoss {
    type Example = LabeledExample;

    fn loss_and_grad<T: Scalar>(&self, params: &[T], batch: &[LabeledExample]) -> (T, Vec<T>) {
        let mut loss = T::zero();
        let mut grad = vec![T::zero(); params.len()];
        for ex in batch {
            let input: Vec<T> = ex.input.iter().map(|v| T::from_f64(*v)).collect();
            let trace = forward_trace(&self.layout, params, &input);
            loss += ce_generic(trace.output(), ex.label);
            let dz = ce_logit_grad(trace.output(), ex.label);
            let (g, _) = backward(&self.layout, params, &trace, dz);
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let inv = 1.0 / batch.len().max(1) as f64;
        (loss.scale(inv), grad.into_iter().map(|g| g.scale(inv)).collect())
    }
}
