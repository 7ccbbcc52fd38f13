use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Plain SGD or bias-corrected Adam over a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    /// First-moment estimate (empty for SGD).
    pub m: Vec<f64>,
    /// Second-moment estimate (empty for SGD).
    pub v: Vec<f64>,
}

impl OptimizerState {
    pub fn sgd(step_size: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn adam(n_params: usize, step_size: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn new(kind: OptimizerKind, n_params: usize, step_size: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::sgd(step_size),
            OptimizerKind::Adam => Self::adam(n_params, step_size),
        }
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if grad.len() != params.len() {
            return Err(Error::LengthMismatch {
                what: "gradient",
                expected: params.len(),
                found: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.step_size * g;
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != params.len() || self.v.len() != params.len() {
                    return Err(Error::LengthMismatch {
                        what: "adam moments",
                        expected: params.len(),
                        found: self.m.len(),
                    });
                }
                self.step += 1;
                let t = self.step as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= self.step_size * m_hat / (v_hat.sqrt() + self.epsilon);
                }
            }
        }
        Ok(())
    }
}

/// Functional form: returns the updated parameters and optimizer state.
pub fn opt_step(
    params: &[f64],
    grad: &[f64],
    state: &OptimizerState,
) -> Result<(Vec<f64>, OptimizerState)> {
    let mut p = params.to_vec();
    let mut s = state.clone();
    s.step(&mut p, grad)?;
    Ok((p, s))
}
