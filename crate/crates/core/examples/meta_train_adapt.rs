//! Meta-trains a shared initialization over device groups, checkpoints it,
//! and adapts it to target devices on either channel sign.
//!
//! cargo run --release --example meta_train_adapt -- [config.toml]
//!
//! Without an argument the default settings are used; try
//! `configs/tuned.toml` for a larger inner step.

use meta_sicnet::checkpoint::{load_meta_state, save_meta_state};
use meta_sicnet::experiments::{target_pilots, train_meta_state, train_sicnet_baseline, ExperimentConfig, TargetChannel};
use meta_sicnet::meta::adapt_with;
use meta_sicnet::sicnet::{combined_loss, sicnet_ser};

pub fn run_example(mut cfg: ExperimentConfig) -> meta_sicnet::Result<Vec<(f64, Vec<f64>, Vec<f64>)>> {
    cfg.seed.get_or_insert(1);
    cfg.validate().map_err(|e| meta_sicnet::Error::Config(e.to_string()))?;
    let mc = cfg.meta_config();

    let state = train_meta_state(&cfg, cfg.device_groups as usize)?;
    let trace = &state.loss_trace;
    println!(
        "meta-trained {} epochs on {} groups: loss {:.3} -> {:.3}",
        trace.len(),
        cfg.device_groups,
        trace.first().copied().unwrap_or(f64::NAN),
        trace.last().copied().unwrap_or(f64::NAN)
    );

    let dir = std::env::temp_dir().join(format!("meta-sicnet-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("meta_state.bin");
    save_meta_state(&state, &path)?;
    let state = load_meta_state(&path)?;
    println!("checkpoint round trip: {} ({} reported params)", path.display(), state.reported_param_count());

    let mut out = Vec::new();
    for channel in [TargetChannel::Plus, TargetChannel::Minus] {
        let cfg = ExperimentConfig {
            target_channel: channel,
            ..cfg.clone()
        };
        let (pilots, eval_seed) = target_pilots(&cfg, cfg.pilots as usize, cfg.test_snr_db, 0)?;
        let adapted = adapt_with(&state, &pilots.pilots, mc.adapt_lr, mc.adapt_epochs, mc.reduction)?;
        let scratch = train_sicnet_baseline(&cfg, &pilots, 0)?;
        let b = cfg.constellation();
        let n = cfg.n_symbols.min(100_000) as u64;
        let meta = sicnet_ser(&adapted, &b, &cfg.powers, pilots.h, cfg.test_snr_db, n, eval_seed)?.ser();
        let base = sicnet_ser(&scratch, &b, &cfg.powers, pilots.h, cfg.test_snr_db, n, eval_seed)?.ser();
        println!(
            "h={:+}: pilot loss {:.3} -> {:.3}; SER meta {meta:.4?} sicnet {base:.4?}",
            pilots.h.re,
            combined_loss(&state.model, &pilots.pilots),
            combined_loss(&adapted, &pilots.pilots)
        );
        out.push((pilots.h.re, meta, base));
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => ExperimentConfig::load(p.as_ref())?,
        None => ExperimentConfig::default(),
    };
    run_example(cfg)?;
    Ok(())
}
