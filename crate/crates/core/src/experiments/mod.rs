//! Configuration-driven experiments: SER sweeps over pilots, SNR and number
//! of meta-training groups, complexity measurements, and standalone
//! training runs. Each run writes `results.csv` and `manifest.json`.
//!
//! Seeding: one master seed fans out into independent streams for the
//! meta-training data, the meta-training run, the target devices and the
//! from-scratch baselines. Target device `r` is the same device at every
//! sweep point, and all detectors at a point see the same test stream.

mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

pub use config::{ExperimentConfig, ExperimentKind, InvalidField, TargetChannel};

use crate::checkpoint;
use crate::classic::ClassicDetector;
use crate::error::{Error, Result};
use crate::meta::{adapt_with, meta_train, pool, target_realization, MetaState};
use crate::phy::{gen_meta_dataset, total_power, NoiseModel, PilotSet};
use crate::rng::{self, tags};
use crate::ser::{measure_ser, Detector, SerEstimate, TestChannel};
use crate::sicnet::{sicnet_train, SicNetArch, SicNetModel};

pub const META: &str = "meta";
pub const SICNET: &str = "sicnet";
pub const CLASSIC: &str = "classic";

/// Streams derived from the master seed.
#[derive(Clone, Copy, Debug)]
struct Seeds {
    master: u64,
    data: u64,
    meta: u64,
    targets: u64,
}

impl Seeds {
    fn new(master: u64) -> Self {
        Self {
            master,
            data: rng::derive(master, tags::META_DATA, 0),
            meta: rng::derive(master, tags::INIT, 0),
            targets: rng::derive(master, tags::REALIZATION, 0),
        }
    }

    /// Initialization of the from-scratch baseline for target device `r`.
    fn sicnet_init(&self, r: usize) -> u64 {
        rng::derive(self.master, tags::INIT, 1 + r as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectorSer {
    pub detector: &'static str,
    /// Pooled over all target realizations.
    pub estimate: SerEstimate,
}

/// SER of every detector at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SerReport {
    pub sweep_var: &'static str,
    pub sweep_value: f64,
    pub pilots: usize,
    pub snr_db: f64,
    pub k_tasks: Option<usize>,
    pub realizations: usize,
    pub seed: u64,
    pub wall_ms: f64,
    pub results: Vec<DetectorSer>,
}

impl SerReport {
    pub fn estimate(&self, detector: &str) -> Option<&SerEstimate> {
        self.results.iter().find(|d| d.detector == detector).map(|d| &d.estimate)
    }

    /// Per-device SER of `detector`.
    pub fn ser(&self, detector: &str) -> Option<Vec<f64>> {
        self.estimate(detector).map(SerEstimate::ser)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub pilots: usize,
    pub sicnet_params: usize,
    pub meta_params: usize,
    pub meta_train_ms_per_epoch: f64,
    pub sicnet_train_ms_per_epoch: f64,
    /// Test-time adaptation: `adapt_epochs` SGD steps from the learned `θ`.
    pub adapt_ms: f64,
    /// From-scratch SICNet training with the same epoch budget as adaptation.
    pub sicnet_scratch_ms: f64,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median wall time of `repeats` runs of `f`, in milliseconds.
fn time_median<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        std::hint::black_box(f()?);
        times.push(ms_since(t));
    }
    Ok(median(times))
}

fn arch(cfg: &ExperimentConfig) -> Result<SicNetArch> {
    SicNetArch::new(cfg.constellation().order(), &cfg.meta_config().hidden)
}

/// Meta-trains on `k` device groups. The group data stream does not depend
/// on `k`, so smaller task counts see a subset of the same draws.
pub fn train_meta_state(cfg: &ExperimentConfig, k: usize) -> Result<MetaState> {
    let seeds = Seeds::new(cfg.master_seed());
    let data = gen_meta_dataset(
        k,
        cfg.group_pilots as usize,
        &cfg.constellation(),
        &cfg.powers,
        cfg.train_snr_db,
        seeds.data,
    )?;
    meta_train(&data, &cfg.meta_config(), seeds.meta)
}

/// Pilots of target device `r` observed at `snr_db`.
pub fn target_pilots(cfg: &ExperimentConfig, pilots: usize, snr_db: f64, r: usize) -> Result<(PilotSet, u64)> {
    let seeds = Seeds::new(cfg.master_seed());
    target_realization(
        &cfg.target_spec(pilots, snr_db),
        &cfg.constellation(),
        &cfg.powers,
        seeds.targets,
        r,
    )
}

/// From-scratch SICNet for target device `r`.
pub fn train_sicnet_baseline(cfg: &ExperimentConfig, pilots: &PilotSet, r: usize) -> Result<SicNetModel> {
    let seeds = Seeds::new(cfg.master_seed());
    let init = SicNetModel::init(arch(cfg)?, seeds.sicnet_init(r));
    Ok(sicnet_train(&init, &pilots.pilots, cfg.sicnet_epochs as usize, &cfg.sicnet_train_config())?.0)
}

/// Evaluates the requested detectors on every target realization and pools
/// the error counts. Detectors share each realization's pilots and test
/// stream.
fn evaluate_point(
    cfg: &ExperimentConfig,
    meta: Option<&MetaState>,
    with_sicnet: bool,
    with_classic: bool,
    pilots: usize,
    snr_db: f64,
) -> Result<Vec<DetectorSer>> {
    let mc = cfg.meta_config();
    let constellation = cfg.constellation();
    let noise = NoiseModel::from_snr_db(snr_db, total_power(&cfg.powers))?;
    let per: Vec<Vec<SerEstimate>> = (0..cfg.realizations as usize)
        .into_par_iter()
        .map(|r| {
            let (ps, eval_seed) = target_pilots(cfg, pilots, snr_db, r)?;
            let adapted = meta
                .map(|s| adapt_with(s, &ps.pilots, mc.adapt_lr, mc.adapt_epochs, mc.reduction))
                .transpose()?;
            let scratch = if with_sicnet {
                Some(train_sicnet_baseline(cfg, &ps, r)?)
            } else {
                None
            };
            let classic = if with_classic {
                Some(ClassicDetector::new(constellation.clone(), cfg.powers.clone(), ps.h)?)
            } else {
                None
            };
            let mut dets: Vec<&dyn Detector> = Vec::new();
            if let Some(m) = &adapted {
                dets.push(m);
            }
            if let Some(m) = &scratch {
                dets.push(m);
            }
            if let Some(c) = &classic {
                dets.push(c);
            }
            let chan = TestChannel {
                constellation: constellation.clone(),
                powers: cfg.powers.clone(),
                h: ps.h,
                noise,
            };
            Ok(measure_ser(&dets, &chan, cfg.n_symbols as u64, eval_seed))
        })
        .collect::<Result<_>>()?;
    let names = [(meta.is_some(), META), (with_sicnet, SICNET), (with_classic, CLASSIC)];
    Ok(names
        .iter()
        .filter(|(on, _)| *on)
        .enumerate()
        .map(|(i, (_, name))| {
            let column: Vec<SerEstimate> = per.iter().map(|p| p[i].clone()).collect();
            DetectorSer {
                detector: name,
                estimate: pool(&column),
            }
        })
        .collect())
}

struct Point {
    sweep_var: &'static str,
    sweep_value: f64,
    pilots: usize,
    snr_db: f64,
    k_tasks: Option<usize>,
}

fn run_points(
    cfg: &ExperimentConfig,
    points: Vec<Point>,
    eval: impl Fn(&Point) -> Result<Vec<DetectorSer>> + Sync,
) -> Result<Vec<SerReport>> {
    points
        .into_par_iter()
        .map(|p| {
            let t = Instant::now();
            let results = eval(&p)?;
            Ok(SerReport {
                sweep_var: p.sweep_var,
                sweep_value: p.sweep_value,
                pilots: p.pilots,
                snr_db: p.snr_db,
                k_tasks: p.k_tasks,
                realizations: cfg.realizations as usize,
                seed: cfg.master_seed(),
                wall_ms: ms_since(t),
                results,
            })
        })
        .collect()
}

fn checked(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate().map_err(|e| Error::Config(e.to_string()))
}

/// Meta-SICNet (one shared `θ`, fresh adaptation per device) against
/// from-scratch SICNet over the pilot grid.
pub fn run_ser_vs_pilots(cfg: &ExperimentConfig) -> Result<(MetaState, Vec<SerReport>)> {
    checked(cfg)?;
    let state = train_meta_state(cfg, cfg.device_groups as usize)?;
    let points = cfg
        .pilot_grid
        .iter()
        .map(|p| Point {
            sweep_var: "pilots",
            sweep_value: *p as f64,
            pilots: *p as usize,
            snr_db: cfg.test_snr_db,
            k_tasks: Some(cfg.device_groups as usize),
        })
        .collect();
    let reports = run_points(cfg, points, |p| evaluate_point(cfg, Some(&state), true, false, p.pilots, p.snr_db))?;
    Ok((state, reports))
}

/// Meta-SICNet, SICNet and classic SIC (perfect channel) over the SNR grid.
pub fn run_ser_vs_snr(cfg: &ExperimentConfig) -> Result<(MetaState, Vec<SerReport>)> {
    checked(cfg)?;
    let state = train_meta_state(cfg, cfg.device_groups as usize)?;
    let points = cfg
        .snr_grid
        .iter()
        .map(|s| Point {
            sweep_var: "snr_db",
            sweep_value: *s,
            pilots: cfg.pilots as usize,
            snr_db: *s,
            k_tasks: Some(cfg.device_groups as usize),
        })
        .collect();
    let reports = run_points(cfg, points, |p| evaluate_point(cfg, Some(&state), true, true, p.pilots, p.snr_db))?;
    Ok((state, reports))
}

/// Independent meta-training per task count, each evaluated at every pilot
/// setting.
pub fn run_ser_vs_tasks(cfg: &ExperimentConfig) -> Result<Vec<SerReport>> {
    checked(cfg)?;
    let states = cfg
        .k_grid
        .par_iter()
        .map(|k| train_meta_state(cfg, *k as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut points = Vec::new();
    for k in &cfg.k_grid {
        for p in &cfg.pilot_settings {
            points.push(Point {
                sweep_var: "k_tasks",
                sweep_value: *k as f64,
                pilots: *p as usize,
                snr_db: cfg.test_snr_db,
                k_tasks: Some(*k as usize),
            });
        }
    }
    run_points(cfg, points, |p| {
        let i = cfg.k_grid.iter().position(|k| Some(*k as usize) == p.k_tasks).expect("k in grid");
        evaluate_point(cfg, Some(&states[i]), false, false, p.pilots, p.snr_db)
    })
}

/// Parameter counts and wall times (median over `timing_repeats` runs).
pub fn run_complexity(cfg: &ExperimentConfig) -> Result<ComplexityReport> {
    checked(cfg)?;
    let repeats = cfg.timing_repeats as usize;
    let mc = cfg.meta_config();
    let pilots = cfg.complexity_pilots as usize;
    let (ps, _) = target_pilots(cfg, pilots, cfg.test_snr_db, 0)?;
    let state = train_meta_state(cfg, cfg.device_groups as usize)?;

    let meta_total = time_median(repeats, || train_meta_state(cfg, cfg.device_groups as usize))?;
    let sicnet_total = time_median(repeats, || train_sicnet_baseline(cfg, &ps, 0))?;
    let equal_budget = ExperimentConfig {
        sicnet_epochs: cfg.adapt_epochs,
        ..cfg.clone()
    };
    // interleaved so that clock drift affects both sides alike
    let mut adapt = Vec::with_capacity(repeats);
    let mut scratch = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        adapt.push(time_median(1, || adapt_with(&state, &ps.pilots, mc.adapt_lr, mc.adapt_epochs, mc.reduction))?);
        scratch.push(time_median(1, || train_sicnet_baseline(&equal_budget, &ps, 0))?);
    }
    let adapt_ms = median(adapt);
    let sicnet_scratch_ms = median(scratch);

    Ok(ComplexityReport {
        pilots,
        sicnet_params: state.model.param_count(),
        meta_params: state.reported_param_count(),
        meta_train_ms_per_epoch: meta_total / (cfg.meta_epochs.max(1) as f64),
        sicnet_train_ms_per_epoch: sicnet_total / (cfg.sicnet_epochs.max(1) as f64),
        adapt_ms,
        sicnet_scratch_ms,
    })
}

/// One row of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsvRow {
    pub experiment: &'static str,
    pub sweep_var: String,
    pub sweep_value: String,
    pub detector: &'static str,
    pub device: String,
    pub ser: Option<f64>,
    pub stderr: Option<f64>,
    pub n_symbols: Option<u64>,
    pub pilots: Option<usize>,
    pub snr_db: Option<f64>,
    pub k_tasks: Option<usize>,
    pub seed: u64,
    pub wall_ms: Option<f64>,
}

/// One row per (sweep point, detector, device), in sweep order.
pub fn ser_rows(kind: ExperimentKind, reports: &[SerReport], with_wall: bool) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for r in reports {
        for d in &r.results {
            let ser = d.estimate.ser();
            let se = d.estimate.std_err();
            for dev in 0..ser.len() {
                rows.push(CsvRow {
                    experiment: kind.name(),
                    sweep_var: r.sweep_var.into(),
                    sweep_value: r.sweep_value.to_string(),
                    detector: d.detector,
                    device: (dev + 1).to_string(),
                    ser: Some(ser[dev]),
                    stderr: Some(se[dev]),
                    n_symbols: Some(d.estimate.n_symbols),
                    pilots: Some(r.pilots),
                    snr_db: Some(r.snr_db),
                    k_tasks: r.k_tasks,
                    seed: r.seed,
                    wall_ms: with_wall.then_some(r.wall_ms),
                });
            }
        }
    }
    rows
}

pub fn complexity_rows(c: &ComplexityReport, seed: u64, with_wall: bool) -> Vec<CsvRow> {
    let row = |var: &str, value: String, detector, wall: Option<f64>| CsvRow {
        experiment: ExperimentKind::Complexity.name(),
        sweep_var: var.into(),
        sweep_value: value,
        detector,
        device: "all".into(),
        ser: None,
        stderr: None,
        n_symbols: None,
        pilots: Some(c.pilots),
        snr_db: None,
        k_tasks: None,
        seed,
        wall_ms: wall.filter(|_| with_wall),
    };
    vec![
        row("param_count", c.sicnet_params.to_string(), SICNET, None),
        row("param_count", c.meta_params.to_string(), META, None),
        row("train_ms_per_epoch", String::new(), SICNET, Some(c.sicnet_train_ms_per_epoch)),
        row("train_ms_per_epoch", String::new(), META, Some(c.meta_train_ms_per_epoch)),
        row("test_time_ms", String::new(), SICNET, Some(c.sicnet_scratch_ms)),
        row("test_time_ms", String::new(), META, Some(c.adapt_ms)),
    ]
}

pub fn write_csv(path: &Path, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Command-line style overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Worker threads; `None` or 0 uses all cores.
    pub threads: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(InvalidField),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Parse(_) => 2,
            RunError::Invalid(_) => 3,
            RunError::Runtime(_) => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub kind: ExperimentKind,
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub reports: Vec<SerReport>,
    pub complexity: Option<ComplexityReport>,
}

/// Loads and validates the configuration and resolves the experiment kind.
pub fn resolve(kind: Option<ExperimentKind>, opts: &RunOptions) -> Result<(ExperimentKind, ExperimentConfig), RunError> {
    let mut cfg = match &opts.config {
        Some(p) => ExperimentConfig::load(p).map_err(RunError::Parse)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = opts.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &opts.out {
        cfg.out = Some(o.clone());
    }
    let kind = match (kind, cfg.experiment) {
        (Some(a), Some(b)) if a != b => {
            return Err(RunError::Invalid(InvalidField {
                field: "experiment",
                reason: format!("config file is for {b}, command asks for {a}"),
            }))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => {
            return Err(RunError::Invalid(InvalidField {
                field: "experiment",
                reason: "no experiment kind given".into(),
            }))
        }
    };
    cfg.experiment = Some(kind);
    cfg.validate().map_err(RunError::Invalid)?;
    Ok((kind, cfg))
}

/// Resolves the configuration, runs the experiment on a pool of
/// `opts.threads` workers and writes its outputs.
pub fn run(kind: Option<ExperimentKind>, opts: &RunOptions) -> Result<RunOutput, RunError> {
    let (kind, cfg) = resolve(kind, opts)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Runtime(Error::Config(format!("thread pool: {e}"))))?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let threads = pool.current_num_threads();
    Ok(pool.install(|| execute(kind, &cfg, &out, threads))?)
}

/// Runs the experiment described by the file at `path`, reporting failures
/// on stderr. Returns the process exit status.
pub fn run_config(path: &Path) -> i32 {
    let opts = RunOptions {
        config: Some(path.to_path_buf()),
        ..Default::default()
    };
    match run(None, &opts) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn checksum_entries(reports: &[SerReport]) -> Vec<serde_json::Value> {
    reports
        .iter()
        .flat_map(|r| {
            r.results.iter().map(move |d| {
                json!({
                    "sweep_var": r.sweep_var,
                    "sweep_value": r.sweep_value,
                    "pilots": r.pilots,
                    "detector": d.detector,
                    "checksum": d.estimate.checksum,
                })
            })
        })
        .collect()
}

fn loss_summary(state: &MetaState) -> serde_json::Value {
    json!({
        "epochs": state.loss_trace.len(),
        "first": state.loss_trace.first(),
        "last": state.loss_trace.last(),
    })
}

fn save_loss_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "meta_loss"])?;
    for (e, l) in trace.iter().enumerate() {
        w.write_record([(e + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn execute(kind: ExperimentKind, cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<RunOutput> {
    std::fs::create_dir_all(out)?;
    let start = Instant::now();
    let seed = cfg.master_seed();
    let mut checkpoints = Vec::new();
    let mut extra = serde_json::Map::new();
    let mut save_state = |state: &MetaState, name: &str, extra: &mut serde_json::Map<String, serde_json::Value>| -> Result<()> {
        extra.insert(format!("meta_loss_{name}"), loss_summary(state));
        if cfg.save_checkpoints {
            let p = out.join(format!("{name}.bin"));
            checkpoint::save_meta_state(state, &p)?;
            checkpoints.push(p);
        }
        Ok(())
    };

    let (reports, complexity) = match kind {
        ExperimentKind::SerVsPilots => {
            let (state, r) = run_ser_vs_pilots(cfg)?;
            save_state(&state, "meta_state", &mut extra)?;
            (r, None)
        }
        ExperimentKind::SerVsSnr => {
            let (state, r) = run_ser_vs_snr(cfg)?;
            save_state(&state, "meta_state", &mut extra)?;
            (r, None)
        }
        ExperimentKind::SerVsTasks => (run_ser_vs_tasks(cfg)?, None),
        ExperimentKind::Complexity => (Vec::new(), Some(run_complexity(cfg)?)),
        ExperimentKind::TrainMeta => {
            checked(cfg)?;
            let state = train_meta_state(cfg, cfg.device_groups as usize)?;
            save_loss_trace(&out.join("loss_trace.csv"), &state.loss_trace)?;
            save_state(&state, "meta_state", &mut extra)?;
            let point = Point {
                sweep_var: "pilots",
                sweep_value: cfg.pilots as f64,
                pilots: cfg.pilots as usize,
                snr_db: cfg.test_snr_db,
                k_tasks: Some(cfg.device_groups as usize),
            };
            let r = run_points(cfg, vec![point], |p| evaluate_point(cfg, Some(&state), false, false, p.pilots, p.snr_db))?;
            (r, None)
        }
        ExperimentKind::TrainSicnet => {
            checked(cfg)?;
            let (ps, _) = target_pilots(cfg, cfg.pilots as usize, cfg.test_snr_db, 0)?;
            let model = train_sicnet_baseline(cfg, &ps, 0)?;
            if cfg.save_checkpoints {
                let p = out.join("sicnet.bin");
                checkpoint::save_model(&model, &p)?;
                checkpoints.push(p);
            }
            let point = Point {
                sweep_var: "pilots",
                sweep_value: cfg.pilots as f64,
                pilots: cfg.pilots as usize,
                snr_db: cfg.test_snr_db,
                k_tasks: None,
            };
            let r = run_points(cfg, vec![point], |p| evaluate_point(cfg, None, true, true, p.pilots, p.snr_db))?;
            (r, None)
        }
    };

    let rows = match &complexity {
        Some(c) => complexity_rows(c, seed, cfg.csv_wall_ms),
        None => ser_rows(kind, &reports, cfg.csv_wall_ms),
    };
    let csv = out.join("results.csv");
    write_csv(&csv, &rows)?;

    let manifest = json!({
        "experiment": kind.name(),
        "seed": seed,
        "threads": threads,
        "package": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "config": cfg,
        "outputs": {
            "csv": "results.csv",
            "rows": rows.len(),
            "checkpoints": checkpoints.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).collect::<Vec<_>>(),
        },
        "timings_ms": {
            "total": ms_since(start),
            "points": reports.iter().map(|r| json!({ "sweep_value": r.sweep_value, "pilots": r.pilots, "wall_ms": r.wall_ms })).collect::<Vec<_>>(),
        },
        "complexity": complexity,
        "stream_checksums": checksum_entries(&reports),
        "extra": extra,
    });
    let manifest_path = out.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;

    Ok(RunOutput {
        kind,
        csv,
        manifest: manifest_path,
        checkpoints,
        reports,
        complexity,
    })
}
