//! Classic SIC with perfect channel knowledge against the joint ML detector
//! and the closed-form SER for BPSK with powers (4, 1).
//!
//! cargo run --release --example classic_sic

use meta_sicnet::classic::{ClassicDetector, MlOracle};
use meta_sicnet::phy::{bpsk, total_power, NoiseModel};
use meta_sicnet::ser::{measure_ser, TestChannel};
use num_complex::Complex64;
use statrs::function::erf::erfc;

fn q(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn run_example() -> meta_sicnet::Result<Vec<[f64; 2]>> {
    let powers = vec![4.0, 1.0];
    let sic = ClassicDetector::new(bpsk(), powers.clone(), Complex64::new(1.0, 0.0))?;
    let ml = MlOracle::new(&sic)?;
    let mut out = Vec::new();
    println!("snr  sic1      sic2      ml1       ml2       closed1   closed2");
    for snr in [0.0, 4.0, 8.0, 12.0] {
        let noise = NoiseModel::from_snr_db(snr, total_power(&powers))?;
        let chan = TestChannel {
            constellation: bpsk(),
            powers: powers.clone(),
            h: sic.h,
            noise,
        };
        let est = measure_ser(&[&sic, &ml], &chan, 200_000, 7);
        let s = (noise.sigma2 / 2.0).sqrt();
        let closed = [
            0.5 * (q(1.0 / s) + q(3.0 / s)),
            0.5 * (3.0 * q(1.0 / s) - 2.0 * q(3.0 / s) + q(5.0 / s)),
        ];
        let (a, b) = (est[0].ser(), est[1].ser());
        println!(
            "{snr:>4} {:.3e} {:.3e} {:.3e} {:.3e} {:.3e} {:.3e}",
            a[0], a[1], b[0], b[1], closed[0], closed[1]
        );
        out.push([a[0], closed[0]]);
    }
    Ok(out)
}

fn main() -> meta_sicnet::Result<()> {
    run_example().map(|_| ())
}
