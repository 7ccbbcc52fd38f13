//! MAML-style meta-training of a shared SICNet initialization over device
//! groups, and few-pilot adaptation to a target device.
//!
//! Each meta-epoch splits every group's pilots into a support set and a
//! query set. The inner step adapts `θ` on the query set and the outer loss
//! is taken on the support set, summed over all groups; `swap_split_roles`
//! exchanges the two.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{inner_outer, GradOrder, Objective, OptimizerKind, OptimizerState};
use crate::phy::{gen_target_pilots, Constellation, MetaDataset, Pilot, PilotSet};
use crate::rng::{self, tags};
use crate::ser::SerEstimate;
use crate::sicnet::{
    check_labels, sicnet_ser, sicnet_train, CombinedLoss, Reduction, SicNetArch, SicNetModel,
    TrainConfig, DEFAULT_HIDDEN,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    /// Outer (meta) learning rate α.
    pub outer_lr: f64,
    /// Inner learning rate β.
    pub inner_lr: f64,
    /// Adaptation learning rate η on the target device.
    pub adapt_lr: f64,
    pub support_size: usize,
    pub query_size: usize,
    pub meta_epochs: usize,
    pub adapt_epochs: usize,
    pub second_order: bool,
    pub outer_optimizer: OptimizerKind,
    pub swap_split_roles: bool,
    /// Batch reduction of the combined loss, shared by all three updates.
    pub reduction: Reduction,
    /// Hidden widths of each block.
    pub hidden: Vec<Vec<usize>>,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            outer_lr: 0.1,
            inner_lr: 0.001,
            adapt_lr: 0.001,
            support_size: 4,
            query_size: 4,
            meta_epochs: 300,
            adapt_epochs: 1000,
            second_order: true,
            outer_optimizer: OptimizerKind::Adam,
            swap_split_roles: false,
            reduction: Reduction::Mean,
            hidden: DEFAULT_HIDDEN.iter().map(|h| h.to_vec()).collect(),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        // α = 0 and β = 0 are accepted as degenerate limits
        for (name, v) in [
            ("outer_lr", self.outer_lr),
            ("inner_lr", self.inner_lr),
            ("adapt_lr", self.adapt_lr),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.support_size == 0 || self.query_size == 0 {
            return Err(Error::Config("support_size and query_size must be >= 1".into()));
        }
        Ok(())
    }

    fn order(&self) -> GradOrder {
        if self.second_order {
            GradOrder::Second
        } else {
            GradOrder::First
        }
    }
}

/// Learned initialization `θ`, outer optimizer state and meta-loss history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaState {
    pub model: SicNetModel,
    pub optimizer: OptimizerState,
    pub loss_trace: Vec<f64>,
}

impl MetaState {
    /// `θ` plus the adapted working copy held during adaptation.
    pub fn reported_param_count(&self) -> usize {
        2 * self.model.param_count()
    }
}

/// One plain SGD step `θ' = θ − β ∇L(θ)` on the mean combined loss.
pub fn inner_adapt(theta: &SicNetModel, batch: &[Pilot], beta: f64) -> Result<SicNetModel> {
    inner_adapt_with(theta, batch, beta, Reduction::Mean)
}

pub fn inner_adapt_with(
    theta: &SicNetModel,
    batch: &[Pilot],
    beta: f64,
    reduction: Reduction,
) -> Result<SicNetModel> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch("inner batch"));
    }
    check_labels(&theta.arch, batch)?;
    let grad = CombinedLoss::with_reduction(&theta.arch, reduction).grad(&theta.theta, batch);
    let mut out = theta.clone();
    OptimizerState::sgd(beta).step(&mut out.theta, &grad)?;
    Ok(out)
}

/// Support and query sets of one group for one epoch.
#[derive(Clone, Debug)]
pub struct Split {
    pub support: Vec<Pilot>,
    pub query: Vec<Pilot>,
}

/// Random support/query split of every group for meta-epoch `epoch`.
pub fn epoch_splits(data: &MetaDataset, cfg: &MetaConfig, seed: u64, epoch: usize) -> Vec<Split> {
    let mut rng = rng::stream(seed, rng::tagged(tags::SPLIT, epoch as u64));
    data.groups
        .iter()
        .map(|g| {
            let mut idx: Vec<usize> = (0..g.pilots.len()).collect();
            idx.shuffle(&mut rng);
            let pick = |r: &[usize]| r.iter().map(|i| g.pilots[*i].clone()).collect();
            Split {
                support: pick(&idx[..cfg.support_size]),
                query: pick(&idx[cfg.support_size..cfg.support_size + cfg.query_size]),
            }
        })
        .collect()
}

/// Outer loss and outer gradient summed over groups, in group order.
pub fn meta_gradient(
    theta: &[f64],
    obj: &CombinedLoss,
    splits: &[Split],
    cfg: &MetaConfig,
) -> Result<(f64, Vec<f64>)> {
    let per_group = splits
        .par_iter()
        .map(|s| {
            let (inner, outer) = if cfg.swap_split_roles {
                (&s.support, &s.query)
            } else {
                (&s.query, &s.support)
            };
            inner_outer(obj, theta, inner, outer, cfg.inner_lr, cfg.order())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; theta.len()];
    for r in per_group {
        loss += r.outer_loss;
        for (a, b) in grad.iter_mut().zip(&r.grad) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

fn check_dataset(data: &MetaDataset, cfg: &MetaConfig) -> Result<()> {
    if data.groups.is_empty() {
        return Err(Error::Config("meta-training dataset has no groups".into()));
    }
    let need = cfg.support_size + cfg.query_size;
    if let Some(g) = data.groups.iter().find(|g| g.pilots.len() < need) {
        return Err(Error::Config(format!(
            "group {} has {} pilots, support + query needs {need}",
            g.group_id,
            g.pilots.len()
        )));
    }
    Ok(())
}

pub fn meta_train(data: &MetaDataset, cfg: &MetaConfig, seed: u64) -> Result<MetaState> {
    cfg.validate()?;
    let arch = SicNetArch::new(data.constellation.order(), &cfg.hidden)?;
    if arch.devices() != data.devices() {
        return Err(Error::Config(format!(
            "{} blocks configured for {} devices",
            arch.devices(),
            data.devices()
        )));
    }
    meta_train_from(SicNetModel::init(arch, seed), data, cfg, seed)
}

/// Meta-training starting from a given initialization.
pub fn meta_train_from(
    init: SicNetModel,
    data: &MetaDataset,
    cfg: &MetaConfig,
    seed: u64,
) -> Result<MetaState> {
    cfg.validate()?;
    check_dataset(data, cfg)?;
    for g in &data.groups {
        check_labels(&init.arch, &g.pilots)?;
    }
    let obj = CombinedLoss::with_reduction(&init.arch, cfg.reduction);
    let mut state = MetaState {
        optimizer: OptimizerState::new(cfg.outer_optimizer, init.param_count(), cfg.outer_lr),
        model: init,
        loss_trace: Vec::with_capacity(cfg.meta_epochs),
    };
    for epoch in 0..cfg.meta_epochs {
        let splits = epoch_splits(data, cfg, seed, epoch);
        let (loss, grad) = meta_gradient(&state.model.theta, &obj, &splits, cfg)?;
        state.loss_trace.push(loss);
        state.optimizer.step(&mut state.model.theta, &grad)?;
    }
    Ok(state)
}

/// `epochs` full-batch SGD steps at rate `η` from the learned `θ` on the
/// mean combined loss.
pub fn adapt(state: &MetaState, target: &[Pilot], eta: f64, epochs: usize) -> Result<SicNetModel> {
    adapt_with(state, target, eta, epochs, Reduction::Mean)
}

pub fn adapt_with(
    state: &MetaState,
    target: &[Pilot],
    eta: f64,
    epochs: usize,
    reduction: Reduction,
) -> Result<SicNetModel> {
    if target.is_empty() {
        return Err(Error::EmptyBatch("target pilot set"));
    }
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Sgd,
        learning_rate: eta,
        reduction,
    };
    Ok(sicnet_train(&state.model, target, epochs, &cfg)?.0)
}

/// How target devices are drawn and evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub pilots: usize,
    /// Fixed channel, or `None` for a fair ±1 draw per realization.
    pub h: Option<Complex64>,
    pub pilot_snr_db: f64,
    pub eval_snr_db: f64,
    pub n_symbols: u64,
    pub realizations: usize,
}

/// Target device number `r`: its pilots and the seed of its test stream.
pub fn target_realization(
    spec: &TargetSpec,
    constellation: &Constellation,
    powers: &[f64],
    seed: u64,
    r: usize,
) -> Result<(PilotSet, u64)> {
    let pilot_seed = rng::derive(seed, tags::REALIZATION, 2 * r as u64);
    let eval_seed = rng::derive(seed, tags::REALIZATION, 2 * r as u64 + 1);
    let pilots = gen_target_pilots(spec.pilots, constellation, powers, spec.h, spec.pilot_snr_db, pilot_seed)?;
    Ok((pilots, eval_seed))
}

/// Pools error counts of several estimates over equal-length streams.
pub fn pool(estimates: &[SerEstimate]) -> SerEstimate {
    let l = estimates.first().map_or(0, |e| e.errors.len());
    let mut errors = vec![0u64; l];
    let mut n = 0;
    let mut checksum = String::new();
    for e in estimates {
        for (a, b) in errors.iter_mut().zip(&e.errors) {
            *a += b;
        }
        n += e.n_symbols;
        if !checksum.is_empty() {
            checksum.push(':');
        }
        checksum.push_str(&e.checksum);
    }
    SerEstimate {
        errors,
        n_symbols: n,
        checksum: rng::digest_hex(checksum.as_bytes()),
    }
}

/// Adapts to `realizations` independent target devices and pools their SER.
pub fn meta_ser(
    state: &MetaState,
    cfg: &MetaConfig,
    spec: &TargetSpec,
    constellation: &Constellation,
    powers: &[f64],
    seed: u64,
) -> Result<SerEstimate> {
    if spec.pilots == 0 || spec.realizations == 0 {
        return Err(Error::Config("pilots and realizations must be >= 1".into()));
    }
    let per = (0..spec.realizations)
        .map(|r| {
            let (pilots, eval_seed) = target_realization(spec, constellation, powers, seed, r)?;
            let adapted = adapt_with(state, &pilots.pilots, cfg.adapt_lr, cfg.adapt_epochs, cfg.reduction)?;
            sicnet_ser(&adapted, constellation, powers, pilots.h, spec.eval_snr_db, spec.n_symbols, eval_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pool(&per))
}
