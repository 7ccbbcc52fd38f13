//! Dense multilayer perceptrons stored as one flat parameter vector.
//!
//! Layer `i` owns `input_dim * output_dim` weights (row-major, one row per
//! output unit) followed by `output_dim` biases. The flat layout is what the
//! optimizers, checkpoints and meta-learning code operate on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Probabilities are floored here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    Identity,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Softmax => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Softmax),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.input_dim * self.output_dim + self.output_dim
    }
}

/// Validated sequence of layers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpLayout {
    layers: Vec<LayerSpec>,
}

impl MlpLayout {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidLayer("network needs at least one layer".into()));
        }
        let last = layers.len() - 1;
        for (i, spec) in layers.iter().enumerate() {
            if spec.input_dim == 0 || spec.output_dim == 0 {
                return Err(Error::InvalidLayer(format!("layer {i} has a zero dimension")));
            }
            if spec.activation == Activation::Softmax && i != last {
                return Err(Error::InvalidLayer(format!(
                    "softmax is only allowed on the final layer (found on layer {i})"
                )));
            }
            if i > 0 && layers[i - 1].output_dim != spec.input_dim {
                return Err(Error::LayerMismatch {
                    index: i,
                    expected: spec.input_dim,
                    found: layers[i - 1].output_dim,
                });
            }
        }
        Ok(Self { layers })
    }

    /// `[input, hidden..., output]` with ReLU hidden layers and a softmax head.
    pub fn classifier(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidLayer("need input and output widths".into()));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n {
                    Activation::Softmax
                } else {
                    Activation::Relu
                };
                LayerSpec::new(widths[i], widths[i + 1], act)
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn ends_in_softmax(&self) -> bool {
        self.layers[self.layers.len() - 1].activation == Activation::Softmax
    }

    /// Fan-in scaled uniform weights in `±sqrt(1/fan_in)`, zero biases.
    pub fn init_values<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut values = Vec::with_capacity(self.param_count());
        for spec in &self.layers {
            let bound = (1.0 / spec.input_dim as f64).sqrt();
            for _ in 0..spec.input_dim * spec.output_dim {
                values.push(rng.random_range(-bound..=bound));
            }
            values.extend(std::iter::repeat_n(0.0, spec.output_dim));
        }
        values
    }
}

/// Parameter vector `θ` together with the layout it belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layout: MlpLayout,
    pub values: Vec<f64>,
}

impl MlpParams {
    pub fn from_values(layout: MlpLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.param_count() {
            return Err(Error::LengthMismatch {
                what: "parameter vector",
                expected: layout.param_count(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: MlpLayout) -> Self {
        let values = vec![0.0; layout.param_count()];
        Self { layout, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn mlp_init(specs: &[LayerSpec], seed: u64) -> Result<MlpParams> {
    let layout = MlpLayout::new(specs.to_vec())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = layout.init_values(&mut rng);
    Ok(MlpParams { layout, values })
}

/// Post-activation outputs of every layer, kept for the reverse pass.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    pub input: Vec<T>,
    pub outputs: Vec<Vec<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &[T] {
        &self.outputs[self.outputs.len() - 1]
    }
}

pub fn softmax_in_place<T: Scalar>(z: &mut [T]) {
    let max = z
        .iter()
        .map(|v| v.value())
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = T::from_f64(max);
    let mut sum = T::zero();
    for v in z.iter_mut() {
        *v = (*v - shift).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v = *v / sum;
    }
}

/// Forward pass that records every layer output. No shape checks.
pub fn forward_trace<T: Scalar>(layout: &MlpLayout, params: &[T], input: &[T]) -> Trace<T> {
    let mut outputs: Vec<Vec<T>> = Vec::with_capacity(layout.layers.len());
    let mut offset = 0;
    for (i, spec) in layout.layers.iter().enumerate() {
        let x: &[T] = if i == 0 { input } else { &outputs[i - 1] };
        let (n_in, n_out) = (spec.input_dim, spec.output_dim);
        let w = &params[offset..offset + n_in * n_out];
        let b = &params[offset + n_in * n_out..offset + spec.param_count()];
        let mut z: Vec<T> = (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut acc = b[o];
                for (wi, xi) in row.iter().zip(x) {
                    acc += *wi * *xi;
                }
                acc
            })
            .collect();
        match spec.activation {
            Activation::Relu => {
                for v in z.iter_mut() {
                    if v.value() <= 0.0 {
                        *v = T::zero();
                    }
                }
            }
            Activation::Softmax => softmax_in_place(&mut z),
            Activation::Identity => {}
        }
        outputs.push(z);
        offset += spec.param_count();
    }
    Trace {
        input: input.to_vec(),
        outputs,
    }
}

/// Vector-Jacobian product of softmax: `p ⊙ (d − ⟨p, d⟩)`.
pub fn softmax_vjp<T: Scalar>(p: &[T], d_post: &[T]) -> Vec<T> {
    let mut dot = T::zero();
    for (pi, di) in p.iter().zip(d_post) {
        dot += *pi * *di;
    }
    p.iter().zip(d_post).map(|(pi, di)| *pi * (*di - dot)).collect()
}

/// Gradient of the floored cross-entropy with respect to softmax logits.
pub fn ce_logit_grad<T: Scalar>(p: &[T], label: usize) -> Vec<T> {
    if p[label].value() <= PROB_FLOOR {
        return vec![T::zero(); p.len()];
    }
    p.iter()
        .enumerate()
        .map(|(i, pi)| if i == label { *pi - T::one() } else { *pi })
        .collect()
}

pub fn ce_generic<T: Scalar>(p: &[T], label: usize) -> T {
    let q = p[label];
    if q.value() <= PROB_FLOOR {
        -T::from_f64(PROB_FLOOR).ln()
    } else {
        -q.ln()
    }
}

/// Reverse pass. `d_pre_last` is the gradient w.r.t. the final layer's
/// pre-activation. Returns `(parameter gradient, input gradient)`.
pub fn backward<T: Scalar>(
    layout: &MlpLayout,
    params: &[T],
    trace: &Trace<T>,
    d_pre_last: Vec<T>,
) -> (Vec<T>, Vec<T>) {
    let mut grad = vec![T::zero(); params.len()];
    let mut offsets = Vec::with_capacity(layout.layers.len());
    let mut off = 0;
    for spec in &layout.layers {
        offsets.push(off);
        off += spec.param_count();
    }

    let mut dz = d_pre_last;
    for i in (0..layout.layers.len()).rev() {
        let spec = layout.layers[i];
        let (n_in, n_out) = (spec.input_dim, spec.output_dim);
        let x: &[T] = if i == 0 {
            &trace.input
        } else {
            &trace.outputs[i - 1]
        };
        let o = offsets[i];
        for r in 0..n_out {
            let g = dz[r];
            let row = &mut grad[o + r * n_in..o + (r + 1) * n_in];
            for (gw, xi) in row.iter_mut().zip(x) {
                *gw += g * *xi;
            }
            grad[o + n_in * n_out + r] += g;
        }
        let mut dx = vec![T::zero(); n_in];
        for r in 0..n_out {
            let g = dz[r];
            let row = &params[o + r * n_in..o + (r + 1) * n_in];
            for (dxi, wi) in dx.iter_mut().zip(row) {
                *dxi += g * *wi;
            }
        }
        if i == 0 {
            return (grad, dx);
        }
        let prev = layout.layers[i - 1];
        dz = activation_vjp(prev.activation, &trace.outputs[i - 1], &dx);
    }
    unreachable!("layout has at least one layer")
}

/// Maps a post-activation gradient to a pre-activation gradient.
pub fn activation_vjp<T: Scalar>(act: Activation, post: &[T], d_post: &[T]) -> Vec<T> {
    match act {
        Activation::Identity => d_post.to_vec(),
        Activation::Relu => post
            .iter()
            .zip(d_post)
            .map(|(a, d)| if a.value() > 0.0 { *d } else { T::zero() })
            .collect(),
        Activation::Softmax => softmax_vjp(post, d_post),
    }
}

fn check_input(params: &MlpParams, input: &[f64]) -> Result<()> {
    if input.len() != params.layout.input_dim() {
        return Err(Error::LengthMismatch {
            what: "network input",
            expected: params.layout.input_dim(),
            found: input.len(),
        });
    }
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network input"));
    }
    Ok(())
}

pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    check_input(params, input)?;
    let trace = forward_trace(&params.layout, &params.values, input);
    Ok(trace.outputs.into_iter().last().unwrap_or_default())
}

pub fn cross_entropy_loss(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: probs.len(),
        });
    }
    Ok(ce_generic(probs, label))
}

/// Gradient of `cross_entropy_loss(mlp_forward(θ, input), label)` w.r.t. θ.
pub fn mlp_backward(params: &MlpParams, input: &[f64], label: usize) -> Result<Vec<f64>> {
    check_input(params, input)?;
    if !params.layout.ends_in_softmax() {
        return Err(Error::InvalidLayer(
            "cross-entropy gradient needs a softmax output layer".into(),
        ));
    }
    if label >= params.layout.output_dim() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: params.layout.output_dim(),
        });
    }
    let trace = forward_trace(&params.layout, &params.values, input);
    let dz = ce_logit_grad(trace.output(), label);
    Ok(backward(&params.layout, &params.values, &trace, dz).0)
}
