//! Model-based baselines with perfect channel knowledge: stage-by-stage SIC
//! and an exhaustive joint maximum-likelihood detector.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phy::{superpose_indices, validate_powers, Constellation, NoiseModel};
use crate::ser::{measure_one, Detector, SerEstimate, TestChannel};

/// Largest number of candidate tuples the ML oracle will enumerate.
pub const ML_LIMIT: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicDetector {
    pub constellation: Constellation,
    pub powers: Vec<f64>,
    pub h: Complex64,
}

impl ClassicDetector {
    pub fn new(constellation: Constellation, powers: Vec<f64>, h: Complex64) -> Result<Self> {
        validate_powers(&powers)?;
        Ok(Self {
            constellation,
            powers,
            h,
        })
    }

    pub fn sic_detect(&self, y: Complex64) -> Vec<usize> {
        let mut out = vec![0; self.powers.len()];
        self.detect_into(y, &mut out);
        out
    }
}

impl Detector for ClassicDetector {
    fn devices(&self) -> usize {
        self.powers.len()
    }

    /// Strongest device first; each decision is re-modulated and subtracted.
    fn detect_into(&self, y: Complex64, out: &mut [usize]) {
        let mut residual = y;
        for (l, p) in self.powers.iter().enumerate() {
            let gain = self.h * p.sqrt();
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, g) in self.constellation.points().iter().enumerate() {
                let d = (residual - gain * g).norm_sqr();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            out[l] = best;
            residual -= gain * self.constellation.point(best);
        }
    }
}

pub fn sic_detect(y: Complex64, det: &ClassicDetector) -> Vec<usize> {
    det.sic_detect(y)
}

/// Joint ML over all `M^L` tuples, precomputed.
#[derive(Clone, Debug)]
pub struct MlOracle {
    devices: usize,
    tuples: Vec<Vec<usize>>,
    points: Vec<Complex64>,
}

impl MlOracle {
    pub fn new(det: &ClassicDetector) -> Result<Self> {
        let m = det.constellation.order();
        let l = det.powers.len();
        let count = (0..l).try_fold(1usize, |acc, _| acc.checked_mul(m));
        let count = match count {
            Some(c) if c <= ML_LIMIT => c,
            Some(c) => return Err(Error::TooLarge(c)),
            None => return Err(Error::TooLarge(usize::MAX)),
        };
        // lexicographic order, device 1 most significant
        let tuples: Vec<Vec<usize>> = (0..count)
            .map(|mut k| {
                let mut t = vec![0; l];
                for slot in t.iter_mut().rev() {
                    *slot = k % m;
                    k /= m;
                }
                t
            })
            .collect();
        let points = tuples
            .iter()
            .map(|t| det.h * superpose_indices(&det.constellation, t, &det.powers))
            .collect();
        Ok(Self {
            devices: l,
            tuples,
            points,
        })
    }
}

impl Detector for MlOracle {
    fn devices(&self) -> usize {
        self.devices
    }

    fn detect_into(&self, y: Complex64, out: &mut [usize]) {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        out.copy_from_slice(&self.tuples[best]);
    }
}

pub fn ml_oracle_detect(y: Complex64, det: &ClassicDetector) -> Result<Vec<usize>> {
    Ok(MlOracle::new(det)?.detect(y))
}

/// Per-device SER of SIC over `n_symbols` fresh transmissions.
pub fn classic_ser(det: &ClassicDetector, snr_db: f64, n_symbols: u64, seed: u64) -> Result<SerEstimate> {
    if n_symbols == 0 {
        return Err(Error::Config("n_symbols must be >= 1".into()));
    }
    let noise = NoiseModel::from_snr_db(snr_db, crate::phy::total_power(&det.powers))?;
    Ok(classic_ser_sigma2(det, noise, n_symbols, seed))
}

pub fn classic_ser_sigma2(det: &ClassicDetector, noise: NoiseModel, n_symbols: u64, seed: u64) -> SerEstimate {
    let chan = TestChannel {
        constellation: det.constellation.clone(),
        powers: det.powers.clone(),
        h: det.h,
        noise,
    };
    measure_one(det, &chan, n_symbols, seed)
}
