//! Runs one of the SER sweeps through the experiment harness and prints the
//! resulting table. The same runs are available from the `meta-sicnet` binary.
//!
//! cargo run --release --example ser_sweep -- [pilots|snr|tasks] [config.toml]

use meta_sicnet::experiments::{run, ExperimentKind, RunOptions};

pub fn run_example(kind: ExperimentKind, opts: RunOptions) -> Result<String, Box<dyn std::error::Error>> {
    let out = run(Some(kind), &opts)?;
    for r in &out.reports {
        let cols: Vec<String> = r
            .results
            .iter()
            .map(|d| {
                let s = d.estimate.ser();
                format!("{} [{:.2e}, {:.2e}]", d.detector, s[0], s[1])
            })
            .collect();
        println!("{}={:<3} pilots={} {}", r.sweep_var, r.sweep_value, r.pilots, cols.join("  "));
    }
    println!("wrote {} and {}", out.csv.display(), out.manifest.display());
    Ok(std::fs::read_to_string(&out.csv)?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let kind = match args.next().as_deref() {
        Some("snr") => ExperimentKind::SerVsSnr,
        Some("tasks") => ExperimentKind::SerVsTasks,
        _ => ExperimentKind::SerVsPilots,
    };
    let config = args
        .next()
        .map(Into::into)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/smoke.toml").into());
    let opts = RunOptions {
        config: Some(config),
        seed: None,
        out: Some(std::env::temp_dir().join("meta-sicnet-sweep")),
        threads: None,
    };
    run_example(kind, opts)?;
    Ok(())
}
