//! Monte-Carlo symbol-error-rate measurement.
//!
//! Test transmissions are generated in fixed-size chunks, each from its own
//! seeded stream, so results do not depend on the thread count. All
//! detectors handed to one [`measure_ser`] call see the same samples, and the
//! returned checksum identifies the exact stream that was consumed.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::phy::{superpose_indices, transmit, Constellation, NoiseModel};
use crate::rng::{self, tags};

const CHUNK: u64 = 4096;

/// Hard-decision detector for all devices of a group.
pub trait Detector: Sync {
    fn devices(&self) -> usize;
    fn detect_into(&self, y: Complex64, out: &mut [usize]);

    fn detect(&self, y: Complex64) -> Vec<usize> {
        let mut out = vec![0; self.devices()];
        self.detect_into(y, &mut out);
        out
    }
}

/// Channel used to generate test transmissions.
#[derive(Clone, Debug)]
pub struct TestChannel {
    pub constellation: Constellation,
    pub powers: Vec<f64>,
    pub h: Complex64,
    pub noise: NoiseModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerEstimate {
    pub errors: Vec<u64>,
    pub n_symbols: u64,
    /// Hex digest of the symbols and samples this estimate was computed on.
    pub checksum: String,
}

impl SerEstimate {
    pub fn ser(&self) -> Vec<f64> {
        self.errors
            .iter()
            .map(|e| *e as f64 / self.n_symbols as f64)
            .collect()
    }

    /// Binomial standard error `sqrt(p(1−p)/n)` per device.
    pub fn std_err(&self) -> Vec<f64> {
        self.ser()
            .iter()
            .map(|p| binomial_std_err(*p, self.n_symbols))
            .collect()
    }
}

pub fn binomial_std_err(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

struct ChunkResult {
    errors: Vec<Vec<u64>>,
    digest: [u8; 32],
}

fn run_chunk(dets: &[&dyn Detector], chan: &TestChannel, seed: u64, chunk: u64, len: u64) -> ChunkResult {
    let l = chan.powers.len();
    let m = chan.constellation.order();
    let mut rng = rng::stream(seed, rng::tagged(tags::EVAL, chunk));
    let mut hasher = Sha256::new();
    let mut errors = vec![vec![0u64; l]; dets.len()];
    let mut symbols = vec![0usize; l];
    let mut decided = vec![0usize; l];
    for _ in 0..len {
        for s in symbols.iter_mut() {
            *s = rng.random_range(0..m);
        }
        let x = superpose_indices(&chan.constellation, &symbols, &chan.powers);
        let y = transmit(x, chan.h, &chan.noise, &mut rng);
        for s in &symbols {
            hasher.update((*s as u32).to_le_bytes());
        }
        hasher.update(y.re.to_le_bytes());
        hasher.update(y.im.to_le_bytes());
        for (d, det) in dets.iter().enumerate() {
            det.detect_into(y, &mut decided);
            for dev in 0..l {
                if decided[dev] != symbols[dev] {
                    errors[d][dev] += 1;
                }
            }
        }
    }
    ChunkResult {
        errors,
        digest: hasher.finalize().into(),
    }
}

/// Runs every detector over the same `n_symbols` fresh transmissions.
pub fn measure_ser(
    dets: &[&dyn Detector],
    chan: &TestChannel,
    n_symbols: u64,
    seed: u64,
) -> Vec<SerEstimate> {
    let l = chan.powers.len();
    let n_chunks = n_symbols.div_ceil(CHUNK);
    let chunks: Vec<ChunkResult> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(n_symbols - c * CHUNK);
            run_chunk(dets, chan, seed, c, len)
        })
        .collect();
    let mut total = Sha256::new();
    let mut errors = vec![vec![0u64; l]; dets.len()];
    for ch in &chunks {
        total.update(ch.digest);
        for (acc, e) in errors.iter_mut().zip(&ch.errors) {
            for (a, b) in acc.iter_mut().zip(e) {
                *a += b;
            }
        }
    }
    let digest = total.finalize();
    let checksum: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    errors
        .into_iter()
        .map(|errors| SerEstimate {
            errors,
            n_symbols,
            checksum: checksum.clone(),
        })
        .collect()
}

pub fn measure_one(det: &dyn Detector, chan: &TestChannel, n_symbols: u64, seed: u64) -> SerEstimate {
    measure_ser(&[det], chan, n_symbols, seed).remove(0)
}
