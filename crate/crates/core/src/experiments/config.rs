//! Experiment configuration: a flat TOML file whose keys mirror the
//! simulation parameters. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::meta::{MetaConfig, TargetSpec};
use crate::numerics::OptimizerKind;
use crate::phy::{bpsk, validate_powers, Constellation};
use crate::sicnet::{Reduction, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SerVsPilots,
    SerVsSnr,
    SerVsTasks,
    Complexity,
    TrainMeta,
    TrainSicnet,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SerVsPilots => "ser_vs_pilots",
            ExperimentKind::SerVsSnr => "ser_vs_snr",
            ExperimentKind::SerVsTasks => "ser_vs_tasks",
            ExperimentKind::Complexity => "complexity",
            ExperimentKind::TrainMeta => "train_meta",
            ExperimentKind::TrainSicnet => "train_sicnet",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Channel of the target device during meta-testing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetChannel {
    /// Fair ±1 draw per realization.
    Random,
    Plus,
    Minus,
}

impl TargetChannel {
    pub fn h(self) -> Option<Complex64> {
        match self {
            TargetChannel::Random => None,
            TargetChannel::Plus => Some(Complex64::new(1.0, 0.0)),
            TargetChannel::Minus => Some(Complex64::new(-1.0, 0.0)),
        }
    }
}

/// A configuration value that fails validation; `field` is the TOML key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvalidField {
    pub field: &'static str,
    pub reason: String,
}

impl fmt::Display for InvalidField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

fn bad(field: &'static str, reason: impl Into<String>) -> InvalidField {
    InvalidField {
        field,
        reason: reason.into(),
    }
}

/// Integer-valued settings are signed so that a negative value is reported
/// as a validation failure naming the key rather than a parse error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    /// Master seed; required (here or on the command line).
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,

    // system model
    pub modulation: String,
    pub powers: Vec<f64>,
    pub device_groups: i64,
    pub group_pilots: i64,
    pub train_snr_db: f64,
    pub test_snr_db: f64,
    pub target_channel: TargetChannel,

    // networks
    pub hidden: Vec<Vec<i64>>,

    // meta-learning
    pub outer_lr: f64,
    pub inner_lr: f64,
    pub adapt_lr: f64,
    pub support_size: i64,
    pub query_size: i64,
    pub meta_epochs: i64,
    pub adapt_epochs: i64,
    pub second_order: bool,
    pub outer_optimizer: OptimizerKind,
    pub swap_split_roles: bool,
    pub loss_reduction: Reduction,

    // from-scratch baseline
    pub sicnet_optimizer: OptimizerKind,
    pub sicnet_lr: f64,
    pub sicnet_epochs: i64,

    // evaluation
    pub pilots: i64,
    pub n_symbols: i64,
    pub realizations: i64,

    // sweeps
    pub pilot_grid: Vec<i64>,
    pub snr_grid: Vec<f64>,
    pub k_grid: Vec<i64>,
    pub pilot_settings: Vec<i64>,

    // timing and output
    pub complexity_pilots: i64,
    pub timing_repeats: i64,
    /// Write wall-clock times into `results.csv` (breaks byte-identical reruns).
    pub csv_wall_ms: bool,
    pub save_checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: None,
            out: None,
            modulation: "bpsk".into(),
            powers: vec![4.0, 1.0],
            device_groups: 20,
            group_pilots: 8,
            train_snr_db: 6.0,
            test_snr_db: 15.0,
            target_channel: TargetChannel::Random,
            hidden: vec![vec![24, 12], vec![32, 16]],
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
            loss_reduction: Reduction::Mean,
            sicnet_optimizer: OptimizerKind::Adam,
            sicnet_lr: 0.01,
            sicnet_epochs: 300,
            pilots: 4,
            n_symbols: 1_000_000,
            realizations: 20,
            pilot_grid: (1..=8).collect(),
            snr_grid: (0..=9).map(|i| 2.0 * i as f64).collect(),
            k_grid: (1..=10).map(|i| 2 * i).collect(),
            pilot_settings: vec![4, 8],
            complexity_pilots: 8,
            timing_repeats: 5,
            csv_wall_ms: false,
            save_checkpoints: true,
        }
    }
}

fn positive(field: &'static str, v: i64) -> Result<(), InvalidField> {
    if v < 1 {
        return Err(bad(field, format!("must be >= 1, got {v}")));
    }
    Ok(())
}

fn non_negative(field: &'static str, v: i64) -> Result<(), InvalidField> {
    if v < 0 {
        return Err(bad(field, format!("must be >= 0, got {v}")));
    }
    Ok(())
}

fn rate(field: &'static str, v: f64) -> Result<(), InvalidField> {
    if !(v.is_finite() && v > 0.0) {
        return Err(bad(field, format!("must be finite and > 0, got {v}")));
    }
    Ok(())
}

fn finite(field: &'static str, v: f64) -> Result<(), InvalidField> {
    if !v.is_finite() {
        return Err(bad(field, format!("must be finite, got {v}")));
    }
    Ok(())
}

fn even_groups(field: &'static str, k: i64) -> Result<(), InvalidField> {
    positive(field, k)?;
    if k % 2 != 0 {
        return Err(bad(field, format!("must be even to split channels ±1, got {k}")));
    }
    Ok(())
}

fn grid(field: &'static str, g: &[i64], check: fn(&'static str, i64) -> Result<(), InvalidField>) -> Result<(), InvalidField> {
    if g.is_empty() {
        return Err(bad(field, "grid must be nonempty"));
    }
    g.iter().try_for_each(|v| check(field, *v))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), InvalidField> {
        if self.seed.is_none() {
            return Err(bad("seed", "a master seed is required"));
        }
        if self.modulation != "bpsk" {
            return Err(bad("modulation", format!("only \"bpsk\" is supported, got {:?}", self.modulation)));
        }
        if self.powers.len() < 2 {
            return Err(bad("powers", "at least two devices are required"));
        }
        validate_powers(&self.powers).map_err(|e| bad("powers", e.to_string()))?;
        if self.hidden.len() != self.powers.len() {
            return Err(bad(
                "hidden",
                format!("{} blocks for {} devices", self.hidden.len(), self.powers.len()),
            ));
        }
        for block in &self.hidden {
            grid("hidden", block, positive)?;
        }
        even_groups("device_groups", self.device_groups)?;
        positive("group_pilots", self.group_pilots)?;
        positive("support_size", self.support_size)?;
        positive("query_size", self.query_size)?;
        if self.support_size + self.query_size > self.group_pilots {
            return Err(bad(
                "group_pilots",
                format!(
                    "support_size + query_size = {} exceeds group_pilots = {}",
                    self.support_size + self.query_size,
                    self.group_pilots
                ),
            ));
        }
        finite("train_snr_db", self.train_snr_db)?;
        finite("test_snr_db", self.test_snr_db)?;
        rate("outer_lr", self.outer_lr)?;
        rate("inner_lr", self.inner_lr)?;
        rate("adapt_lr", self.adapt_lr)?;
        rate("sicnet_lr", self.sicnet_lr)?;
        non_negative("meta_epochs", self.meta_epochs)?;
        non_negative("adapt_epochs", self.adapt_epochs)?;
        non_negative("sicnet_epochs", self.sicnet_epochs)?;
        positive("pilots", self.pilots)?;
        positive("n_symbols", self.n_symbols)?;
        positive("realizations", self.realizations)?;
        grid("pilot_grid", &self.pilot_grid, positive)?;
        if self.snr_grid.is_empty() {
            return Err(bad("snr_grid", "grid must be nonempty"));
        }
        self.snr_grid.iter().try_for_each(|v| finite("snr_grid", *v))?;
        grid("k_grid", &self.k_grid, even_groups)?;
        grid("pilot_settings", &self.pilot_settings, positive)?;
        positive("complexity_pilots", self.complexity_pilots)?;
        positive("timing_repeats", self.timing_repeats)?;
        Ok(())
    }

    /// Seed after validation.
    pub fn master_seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    pub fn constellation(&self) -> Constellation {
        bpsk()
    }

    pub fn meta_config(&self) -> MetaConfig {
        MetaConfig {
            outer_lr: self.outer_lr,
            inner_lr: self.inner_lr,
            adapt_lr: self.adapt_lr,
            support_size: self.support_size as usize,
            query_size: self.query_size as usize,
            meta_epochs: self.meta_epochs as usize,
            adapt_epochs: self.adapt_epochs as usize,
            second_order: self.second_order,
            outer_optimizer: self.outer_optimizer,
            swap_split_roles: self.swap_split_roles,
            reduction: self.loss_reduction,
            hidden: self
                .hidden
                .iter()
                .map(|b| b.iter().map(|w| *w as usize).collect())
                .collect(),
        }
    }

    pub fn sicnet_train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: self.sicnet_optimizer,
            learning_rate: self.sicnet_lr,
            reduction: self.loss_reduction,
        }
    }

    /// Target devices with `pilots` pilots observed and evaluated at `snr_db`.
    pub fn target_spec(&self, pilots: usize, snr_db: f64) -> TargetSpec {
        TargetSpec {
            pilots,
            h: self.target_channel.h(),
            pilot_snr_db: snr_db,
            eval_snr_db: snr_db,
            n_symbols: self.n_symbols as u64,
            realizations: self.realizations as usize,
        }
    }
}
