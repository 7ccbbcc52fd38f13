//! Stacked-DNN SIC detector.
//!
//! Block `l` sees `[Re y, Im y, p_1, …, p_{l−1}]` and emits a softmax over the
//! `M` constellation points for device `l`. Blocks are chained through their
//! soft outputs, so the combined loss backpropagates from block 2 into
//! block 1 through `p_1`.

use std::cell::RefCell;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    backward, ce_generic, ce_logit_grad, forward_trace, softmax_in_place, softmax_vjp, Activation,
    MlpLayout, Objective, OptimizerKind, OptimizerState, Scalar,
};
use crate::phy::{Constellation, NoiseModel, Pilot};
use crate::rng::{self, tags};
use crate::ser::{measure_ser, Detector, SerEstimate, TestChannel};

/// Hidden widths of the two default blocks.
pub const DEFAULT_HIDDEN: [[usize; 2]; 2] = [[24, 12], [32, 16]];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SicNetArch {
    order: usize,
    blocks: Vec<MlpLayout>,
}

impl SicNetArch {
    /// One block per device; `hidden[l]` lists the hidden widths of block `l`.
    pub fn new(order: usize, hidden: &[Vec<usize>]) -> Result<Self> {
        if order < 2 {
            return Err(Error::Config("constellation order must be >= 2".into()));
        }
        if hidden.is_empty() {
            return Err(Error::Config("at least one block is required".into()));
        }
        let blocks = hidden
            .iter()
            .enumerate()
            .map(|(l, widths)| {
                let mut w = Vec::with_capacity(widths.len() + 2);
                w.push(2 + l * order);
                w.extend_from_slice(widths);
                w.push(order);
                MlpLayout::classifier(&w)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_blocks(order, blocks)
    }

    pub fn from_blocks(order: usize, blocks: Vec<MlpLayout>) -> Result<Self> {
        for (l, b) in blocks.iter().enumerate() {
            if b.input_dim() != 2 + l * order {
                return Err(Error::Config(format!(
                    "block {} must take {} inputs, found {}",
                    l + 1,
                    2 + l * order,
                    b.input_dim()
                )));
            }
            if b.output_dim() != order || !b.ends_in_softmax() {
                return Err(Error::Config(format!(
                    "block {} must end in a width-{order} softmax",
                    l + 1
                )));
            }
        }
        Ok(Self { order, blocks })
    }

    /// BPSK, two devices, blocks `2→24→12→2` and `4→32→16→2`.
    pub fn default_two_device() -> Self {
        Self::new(2, &DEFAULT_HIDDEN.map(|h| h.to_vec())).expect("default architecture is valid")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn devices(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[MlpLayout] {
        &self.blocks
    }

    pub fn block_param_counts(&self) -> Vec<usize> {
        self.blocks.iter().map(MlpLayout::param_count).collect()
    }

    pub fn param_count(&self) -> usize {
        self.block_param_counts().iter().sum()
    }

    /// `(start, end)` of every block inside the flat parameter vector.
    pub fn block_ranges(&self) -> Vec<(usize, usize)> {
        let mut start = 0;
        self.blocks
            .iter()
            .map(|b| {
                let r = (start, start + b.param_count());
                start = r.1;
                r
            })
            .collect()
    }

    /// Largest layer width, used to size inference buffers.
    fn max_width(&self) -> usize {
        self.blocks
            .iter()
            .flat_map(|b| b.layers().iter().map(|s| s.input_dim.max(s.output_dim)))
            .max()
            .unwrap_or(1)
    }
}

/// Architecture plus one flat parameter vector covering all blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SicNetModel {
    pub arch: SicNetArch,
    pub theta: Vec<f64>,
}

impl SicNetModel {
    pub fn init(arch: SicNetArch, seed: u64) -> Self {
        let mut rng = rng::stream(seed, rng::tagged(tags::INIT, 0));
        let theta = arch
            .blocks
            .iter()
            .flat_map(|b| b.init_values(&mut rng))
            .collect();
        Self { arch, theta }
    }

    pub fn zeros(arch: SicNetArch) -> Self {
        let theta = vec![0.0; arch.param_count()];
        Self { arch, theta }
    }

    pub fn from_theta(arch: SicNetArch, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != arch.param_count() {
            return Err(Error::LengthMismatch {
                what: "SICNet parameter vector",
                expected: arch.param_count(),
                found: theta.len(),
            });
        }
        Ok(Self { arch, theta })
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn block_params(&self, l: usize) -> &[f64] {
        let (a, b) = self.arch.block_ranges()[l];
        &self.theta[a..b]
    }

    pub fn forward(&self, y: Complex64) -> SoftDecisions {
        sicnet_forward(self, y)
    }

    pub fn detect(&self, y: Complex64) -> Vec<usize> {
        sicnet_detect(self, y)
    }
}

pub fn build_default(seed: u64) -> SicNetModel {
    SicNetModel::init(SicNetArch::default_two_device(), seed)
}

/// `p_1..p_L`, one probability vector per device.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftDecisions {
    pub probs: Vec<Vec<f64>>,
}

impl SoftDecisions {
    pub fn hard(&self) -> Vec<usize> {
        self.probs.iter().map(|p| argmax(p)).collect()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

fn block_input<T: Scalar>(y: Complex64, prev: &[Vec<T>]) -> Vec<T> {
    let mut input = Vec::with_capacity(2 + prev.iter().map(Vec::len).sum::<usize>());
    input.push(T::from_f64(y.re));
    input.push(T::from_f64(y.im));
    for p in prev {
        input.extend_from_slice(p);
    }
    input
}

pub fn sicnet_forward(model: &SicNetModel, y: Complex64) -> SoftDecisions {
    let mut probs: Vec<Vec<f64>> = Vec::with_capacity(model.arch.devices());
    for (l, (a, b)) in model.arch.block_ranges().into_iter().enumerate() {
        let input = block_input(y, &probs);
        let trace = forward_trace(&model.arch.blocks[l], &model.theta[a..b], &input);
        probs.push(trace.output().to_vec());
    }
    SoftDecisions { probs }
}

pub fn sicnet_detect(model: &SicNetModel, y: Complex64) -> Vec<usize> {
    let mut out = vec![0; model.arch.devices()];
    model.detect_into(y, &mut out);
    out
}

/// Allocation-free f64 forward pass of one dense block into `out`.
fn dense_forward(layout: &MlpLayout, params: &[f64], input: &[f64], a: &mut Vec<f64>, b: &mut Vec<f64>) {
    a.clear();
    a.extend_from_slice(input);
    let mut offset = 0;
    for spec in layout.layers() {
        let (n_in, n_out) = (spec.input_dim, spec.output_dim);
        let w = &params[offset..offset + n_in * n_out];
        let bias = &params[offset + n_in * n_out..offset + spec.param_count()];
        b.clear();
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut acc = bias[o];
            for (wi, xi) in row.iter().zip(a.iter()) {
                acc += wi * xi;
            }
            b.push(acc);
        }
        match spec.activation {
            Activation::Relu => b.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Softmax => softmax_in_place(b),
            Activation::Identity => {}
        }
        std::mem::swap(a, b);
        offset += spec.param_count();
    }
}

thread_local! {
    static SCRATCH: RefCell<(Vec<f64>, Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new(), Vec::new())) };
}

impl Detector for SicNetModel {
    fn devices(&self) -> usize {
        self.arch.devices()
    }

    fn detect_into(&self, y: Complex64, out: &mut [usize]) {
        SCRATCH.with(|cell| {
            let (input, a, b) = &mut *cell.borrow_mut();
            let cap = self.arch.max_width() + 2 + self.arch.devices() * self.arch.order;
            input.reserve(cap);
            input.clear();
            input.push(y.re);
            input.push(y.im);
            let mut offset = 0;
            for (l, layout) in self.arch.blocks.iter().enumerate() {
                let n = layout.param_count();
                dense_forward(layout, &self.theta[offset..offset + n], input, a, b);
                out[l] = argmax(a);
                input.extend_from_slice(a);
                offset += n;
            }
        });
    }
}

/// How per-example losses are combined over a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    fn factor(self, n: usize) -> f64 {
        match self {
            Reduction::Mean => 1.0 / n.max(1) as f64,
            Reduction::Sum => 1.0,
        }
    }
}

/// Sum over devices of the per-example cross-entropy, reduced over the batch.
#[derive(Clone, Debug)]
pub struct CombinedLoss {
    pub arch: SicNetArch,
    pub reduction: Reduction,
}

impl CombinedLoss {
    pub fn new(arch: &SicNetArch) -> Self {
        Self {
            arch: arch.clone(),
            reduction: Reduction::Mean,
        }
    }

    pub fn with_reduction(arch: &SicNetArch, reduction: Reduction) -> Self {
        Self {
            arch: arch.clone(),
            reduction,
        }
    }
}

fn example_loss_grad<T: Scalar>(arch: &SicNetArch, theta: &[T], pilot: &Pilot, grad: &mut [T]) -> T {
    let ranges = arch.block_ranges();
    let m = arch.order;
    let mut traces = Vec::with_capacity(arch.devices());
    let mut probs: Vec<Vec<T>> = Vec::with_capacity(arch.devices());
    let mut loss = T::zero();
    for (l, (a, b)) in ranges.iter().enumerate() {
        let input = block_input(pilot.y, &probs);
        let trace = forward_trace(&arch.blocks[l], &theta[*a..*b], &input);
        loss += ce_generic(trace.output(), pilot.symbols[l]);
        probs.push(trace.output().to_vec());
        traces.push(trace);
    }
    let mut d_post: Vec<Vec<T>> = vec![vec![T::zero(); m]; arch.devices()];
    for l in (0..arch.devices()).rev() {
        let (a, b) = ranges[l];
        let p = &probs[l];
        let mut dz = ce_logit_grad(p, pilot.symbols[l]);
        if l + 1 < arch.devices() {
            for (z, v) in dz.iter_mut().zip(softmax_vjp(p, &d_post[l])) {
                *z += v;
            }
        }
        let (g, dx) = backward(&arch.blocks[l], &theta[a..b], &traces[l], dz);
        for (acc, v) in grad[a..b].iter_mut().zip(g) {
            *acc += v;
        }
        for j in 0..l {
            for (acc, v) in d_post[j].iter_mut().zip(&dx[2 + j * m..2 + (j + 1) * m]) {
                *acc += *v;
            }
        }
    }
    loss
}

impl Objective for CombinedLoss {
    type Example = Pilot;

    fn loss_and_grad<T: Scalar>(&self, params: &[T], batch: &[Pilot]) -> (T, Vec<T>) {
        let mut grad = vec![T::zero(); params.len()];
        let mut loss = T::zero();
        for pilot in batch {
            loss += example_loss_grad(&self.arch, params, pilot, &mut grad);
        }
        let f = self.reduction.factor(batch.len());
        (loss.scale(f), grad.into_iter().map(|g| g.scale(f)).collect())
    }

    fn loss(&self, params: &[f64], batch: &[Pilot]) -> f64 {
        let model = SicNetModel {
            arch: self.arch.clone(),
            theta: params.to_vec(),
        };
        combined_loss(&model, batch) * batch.len().max(1) as f64 * self.reduction.factor(batch.len())
    }
}

/// Mean combined cross-entropy of `model` on `pilots`.
pub fn combined_loss(model: &SicNetModel, pilots: &[Pilot]) -> f64 {
    let total: f64 = pilots
        .iter()
        .map(|p| {
            sicnet_forward(model, p.y)
                .probs
                .iter()
                .zip(&p.symbols)
                .map(|(q, s)| ce_generic(q, *s))
                .sum::<f64>()
        })
        .sum();
    total / pilots.len().max(1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default)]
    pub reduction: Reduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.01,
            reduction: Reduction::Mean,
        }
    }
}

/// Full-batch training on `pilots`. Returns the trained copy and the loss
/// recorded before every epoch's update.
pub fn sicnet_train(
    model: &SicNetModel,
    pilots: &[Pilot],
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<(SicNetModel, Vec<f64>)> {
    if pilots.is_empty() {
        return Err(Error::EmptyBatch("pilot set"));
    }
    check_labels(&model.arch, pilots)?;
    let obj = CombinedLoss::with_reduction(&model.arch, cfg.reduction);
    let mut trained = model.clone();
    let mut opt = OptimizerState::new(cfg.optimizer, trained.theta.len(), cfg.learning_rate);
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let (loss, grad) = obj.loss_and_grad(&trained.theta, pilots);
        trace.push(loss);
        opt.step(&mut trained.theta, &grad)?;
    }
    Ok((trained, trace))
}

pub(crate) fn check_labels(arch: &SicNetArch, pilots: &[Pilot]) -> Result<()> {
    for p in pilots {
        if p.symbols.len() != arch.devices() {
            return Err(Error::LengthMismatch {
                what: "pilot symbol tuple",
                expected: arch.devices(),
                found: p.symbols.len(),
            });
        }
        if let Some(s) = p.symbols.iter().find(|s| **s >= arch.order) {
            return Err(Error::LabelOutOfRange {
                label: *s,
                classes: arch.order,
            });
        }
        if !(p.y.re.is_finite() && p.y.im.is_finite()) {
            return Err(Error::NonFinite("received sample"));
        }
    }
    Ok(())
}

/// Monte-Carlo SER of the model's hard decisions on a fresh test stream.
pub fn sicnet_ser(
    model: &SicNetModel,
    constellation: &Constellation,
    powers: &[f64],
    h: Complex64,
    snr_db: f64,
    n_symbols: u64,
    seed: u64,
) -> Result<SerEstimate> {
    if n_symbols == 0 {
        return Err(Error::Config("n_symbols must be >= 1".into()));
    }
    let chan = TestChannel {
        constellation: constellation.clone(),
        powers: powers.to_vec(),
        h,
        noise: NoiseModel::from_snr_db(snr_db, crate::phy::total_power(powers))?,
    };
    Ok(measure_ser(&[model], &chan, n_symbols, seed).remove(0))
}
