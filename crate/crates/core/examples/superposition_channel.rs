//! The two-device uplink: composite constellation, noisy pilots for a few
//! meta-training groups, and the dataset CSV format.
//!
//! cargo run --release --example superposition_channel

use meta_sicnet::phy::{bpsk, gen_meta_dataset, superpose_indices, write_dataset_csv, snr_db_to_sigma2};

pub fn run_example() -> meta_sicnet::Result<String> {
    let b = bpsk();
    let powers = [4.0, 1.0];
    for i in 0..2 {
        for j in 0..2 {
            println!("symbols ({i}, {j}) -> x = {:+}", superpose_indices(&b, &[i, j], &powers).re);
        }
    }
    println!("6 dB -> sigma^2 = {:.4}", snr_db_to_sigma2(6.0, 5.0)?);

    let data = gen_meta_dataset(4, 8, &b, &powers, 6.0, 1)?;
    for g in &data.groups {
        let ys: Vec<String> = g.pilots.iter().map(|p| format!("{:+.2}", p.y.re)).collect();
        println!("group {} h={:+} y=[{}]", g.group_id, g.h.re, ys.join(" "));
    }
    let mut buf = Vec::new();
    write_dataset_csv(&data, &mut buf)?;
    let text = String::from_utf8(buf).expect("utf-8 csv");
    println!("{}", text.lines().take(3).collect::<Vec<_>>().join("\n"));
    Ok(text)
}

fn main() -> meta_sicnet::Result<()> {
    run_example().map(|_| ())
}
