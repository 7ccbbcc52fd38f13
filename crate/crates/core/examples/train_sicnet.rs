//! Trains a SICNet from scratch on the pilots of one device and measures its
//! SER next to classic SIC.
//!
//! cargo run --release --example train_sicnet -- [pilots] [epochs]

use meta_sicnet::classic::{classic_ser, ClassicDetector};
use meta_sicnet::phy::{bpsk, gen_target_pilots};
use meta_sicnet::sicnet::{build_default, combined_loss, sicnet_ser, sicnet_train, TrainConfig};
use num_complex::Complex64;

pub fn run_example(pilots: usize, epochs: usize) -> meta_sicnet::Result<Vec<f64>> {
    let powers = [4.0, 1.0];
    let snr = 15.0;
    let h = Complex64::new(-1.0, 0.0);
    let set = gen_target_pilots(pilots, &bpsk(), &powers, Some(h), snr, 2)?;
    let init = build_default(1);
    let (model, trace) = sicnet_train(&init, &set.pilots, epochs, &TrainConfig::default())?;
    println!(
        "{} params, pilot loss {:.4} -> {:.4}",
        model.param_count(),
        trace.first().copied().unwrap_or(f64::NAN),
        combined_loss(&model, &set.pilots)
    );
    let ser = sicnet_ser(&model, &bpsk(), &powers, h, snr, 100_000, 9)?.ser();
    let det = ClassicDetector::new(bpsk(), powers.to_vec(), h)?;
    let reference = classic_ser(&det, snr, 100_000, 9)?.ser();
    println!("sicnet SER {ser:.4?}, classic SIC {reference:.4?}");
    Ok(ser)
}

fn main() -> meta_sicnet::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    run_example(args.first().copied().unwrap_or(16), args.get(1).copied().unwrap_or(300)).map(|_| ())
}
