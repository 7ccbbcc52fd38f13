use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meta_sicnet::experiments::{run, ExperimentKind, RunOptions};

#[derive(Parser)]
#[command(version, about = "Meta-learned SIC detector experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train a shared initialization and save it.
    TrainMeta(Common),
    /// Train a SICNet from scratch on one target device.
    TrainSicnet(Common),
    /// SER against the number of target pilots.
    SerVsPilots(Common),
    /// SER against SNR, including classic SIC.
    SerVsSnr(Common),
    /// SER against the number of meta-training groups.
    SerVsTasks(Common),
    /// Parameter counts and wall times.
    Complexity(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; unset keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, c) = match cli.command {
        Command::TrainMeta(c) => (ExperimentKind::TrainMeta, c),
        Command::TrainSicnet(c) => (ExperimentKind::TrainSicnet, c),
        Command::SerVsPilots(c) => (ExperimentKind::SerVsPilots, c),
        Command::SerVsSnr(c) => (ExperimentKind::SerVsSnr, c),
        Command::SerVsTasks(c) => (ExperimentKind::SerVsTasks, c),
        Command::Complexity(c) => (ExperimentKind::Complexity, c),
    };
    let opts = RunOptions {
        config: c.config,
        seed: c.seed,
        out: c.out,
        threads: Some(c.threads),
    };
    match run(Some(kind), &opts) {
        Ok(out) => {
            println!("{} -> {}", out.kind, out.csv.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
