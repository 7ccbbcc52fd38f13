//! Trainable-parameter counts and wall times of meta-training, from-scratch
//! training and test-time adaptation.
//!
//! cargo run --release --example complexity

use meta_sicnet::experiments::{run_complexity, ComplexityReport, ExperimentConfig};

pub fn run_example(cfg: &ExperimentConfig) -> meta_sicnet::Result<ComplexityReport> {
    let c = run_complexity(cfg)?;
    println!("parameters: sicnet {} / meta-sicnet {}", c.sicnet_params, c.meta_params);
    println!(
        "training per epoch: sicnet {:.3} ms / meta {:.3} ms",
        c.sicnet_train_ms_per_epoch, c.meta_train_ms_per_epoch
    );
    println!(
        "test time ({} pilots, equal epochs): sicnet from scratch {:.2} ms / adaptation {:.2} ms",
        c.pilots, c.sicnet_scratch_ms, c.adapt_ms
    );
    Ok(c)
}

fn main() -> meta_sicnet::Result<()> {
    let cfg = ExperimentConfig {
        seed: Some(1),
        ..Default::default()
    };
    run_example(&cfg).map(|_| ())
}
