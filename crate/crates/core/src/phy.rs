//! Physical layer: constellations, power-domain superposition, the
//! flat-channel AWGN model and pilot dataset generation.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tags};

/// Symbol alphabet with unit mean power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn new(points: Vec<Complex64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("constellation must have at least one point".into()));
        }
        let power = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
        if (power - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "constellation mean power is {power}, expected 1"
            )));
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    return Err(Error::Config(format!("constellation points {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { points })
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    pub fn mean_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }
}

/// BPSK: index 0 is `+1`, index 1 is `−1`.
pub fn bpsk() -> Constellation {
    Constellation {
        points: vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
    }
}

/// Power allocation and channel coefficient of one device group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceGroupConfig {
    pub powers: Vec<f64>,
    pub h: Complex64,
}

impl DeviceGroupConfig {
    pub fn new(powers: Vec<f64>, h: Complex64) -> Result<Self> {
        validate_powers(&powers)?;
        Ok(Self { powers, h })
    }

    pub fn devices(&self) -> usize {
        self.powers.len()
    }
}

pub fn validate_powers(powers: &[f64]) -> Result<()> {
    if powers.is_empty() {
        return Err(Error::Config("at least one device power is required".into()));
    }
    if powers.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::Config("device powers must be positive and finite".into()));
    }
    if powers.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Config(
            "device powers must be strictly descending (P1 > P2 > ...)".into(),
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Complex noise variance; each component carries half of it.
    pub sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0) || sigma2.is_infinite() {
            return Err(Error::Config(format!("noise variance must be >= 0, got {sigma2}")));
        }
        Ok(Self { sigma2 })
    }

    pub fn from_snr_db(snr_db: f64, total_power: f64) -> Result<Self> {
        Self::new(snr_db_to_sigma2(snr_db, total_power)?)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Complex64 {
        let s = (self.sigma2 / 2.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    }
}

/// `Σ_l √P_l · x_l`.
pub fn superpose(symbols: &[Complex64], powers: &[f64]) -> Result<Complex64> {
    if symbols.len() != powers.len() {
        return Err(Error::LengthMismatch {
            what: "per-device symbols",
            expected: powers.len(),
            found: symbols.len(),
        });
    }
    Ok(symbols
        .iter()
        .zip(powers)
        .map(|(x, p)| x * p.sqrt())
        .sum())
}

/// Superposition of constellation indices; no validation.
#[inline]
pub fn superpose_indices(constellation: &Constellation, indices: &[usize], powers: &[f64]) -> Complex64 {
    indices
        .iter()
        .zip(powers)
        .map(|(i, p)| constellation.point(*i) * p.sqrt())
        .sum()
}

/// `y = h·x + n`.
pub fn transmit<R: Rng>(x: Complex64, h: Complex64, noise: &NoiseModel, rng: &mut R) -> Complex64 {
    h * x + noise.sample(rng)
}

/// `σ² = P_total / 10^(snr_db/10)`; `+∞` dB maps to a noiseless channel.
pub fn snr_db_to_sigma2(snr_db: f64, total_power: f64) -> Result<f64> {
    if !(total_power > 0.0) || !total_power.is_finite() {
        return Err(Error::Config(format!("total power must be positive, got {total_power}")));
    }
    if snr_db.is_nan() {
        return Err(Error::Config("SNR is NaN".into()));
    }
    Ok(total_power / 10f64.powf(snr_db / 10.0))
}

/// Total received power `Σ P_l` for unit-power symbols.
pub fn total_power(powers: &[f64]) -> f64 {
    powers.iter().sum()
}

/// One labeled transmission: the per-device symbol indices and what the
/// base station received.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pilot {
    pub symbols: Vec<usize>,
    pub y: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotSet {
    pub group_id: usize,
    pub h: Complex64,
    pub snr_db: f64,
    pub pilots: Vec<Pilot>,
}

impl PilotSet {
    pub fn len(&self) -> usize {
        self.pilots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pilots.is_empty()
    }
}

/// Pilot sets of the K meta-training device groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaDataset {
    pub constellation: Constellation,
    pub powers: Vec<f64>,
    pub groups: Vec<PilotSet>,
}

impl MetaDataset {
    pub fn devices(&self) -> usize {
        self.powers.len()
    }
}

fn draw_pilots<R: Rng>(
    rng: &mut R,
    n: usize,
    constellation: &Constellation,
    powers: &[f64],
    h: Complex64,
    noise: &NoiseModel,
) -> Vec<Pilot> {
    let m = constellation.order();
    (0..n)
        .map(|_| {
            let symbols: Vec<usize> = powers.iter().map(|_| rng.random_range(0..m)).collect();
            let x = superpose_indices(constellation, &symbols, powers);
            let y = transmit(x, h, noise, rng);
            Pilot { symbols, y }
        })
        .collect()
}

/// K groups of N pilots; the first K/2 groups see `h = +1`, the rest `h = −1`.
pub fn gen_meta_dataset(
    k: usize,
    n: usize,
    constellation: &Constellation,
    powers: &[f64],
    snr_db: f64,
    seed: u64,
) -> Result<MetaDataset> {
    if k == 0 || k % 2 != 0 {
        return Err(Error::Config(format!(
            "number of device groups K must be even and positive to split channels ±1, got {k}"
        )));
    }
    if n == 0 {
        return Err(Error::Config("pilots per group N must be >= 1".into()));
    }
    validate_powers(powers)?;
    let noise = NoiseModel::from_snr_db(snr_db, total_power(powers))?;
    let groups = (0..k)
        .map(|g| {
            let h = if g < k / 2 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(-1.0, 0.0)
            };
            let mut rng = rng::stream(seed, rng::tagged(tags::META_DATA, g as u64));
            PilotSet {
                group_id: g,
                h,
                snr_db,
                pilots: draw_pilots(&mut rng, n, constellation, powers, h, &noise),
            }
        })
        .collect();
    Ok(MetaDataset {
        constellation: constellation.clone(),
        powers: powers.to_vec(),
        groups,
    })
}

/// P pilots from a target device. When `h` is `None` the channel is drawn
/// uniformly from `{+1, −1}`.
pub fn gen_target_pilots(
    p: usize,
    constellation: &Constellation,
    powers: &[f64],
    h: Option<Complex64>,
    snr_db: f64,
    seed: u64,
) -> Result<PilotSet> {
    if p == 0 {
        return Err(Error::Config("target pilot count P must be >= 1".into()));
    }
    validate_powers(powers)?;
    let noise = NoiseModel::from_snr_db(snr_db, total_power(powers))?;
    let mut rng = rng::stream(seed, rng::tagged(tags::TARGET_PILOTS, 0));
    let h = h.unwrap_or_else(|| random_sign_channel(&mut rng));
    Ok(PilotSet {
        group_id: 0,
        h,
        snr_db,
        pilots: draw_pilots(&mut rng, p, constellation, powers, h, &noise),
    })
}

pub fn random_sign_channel<R: Rng>(rng: &mut R) -> Complex64 {
    if rng.random_bool(0.5) {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::new(-1.0, 0.0)
    }
}

/// Writes a dataset as CSV: `group_id, pilot_index, sym_dev1..sym_devL,
/// y_re, y_im, h_re, h_im, snr_db`.
pub fn write_dataset_csv<W: Write>(data: &MetaDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["group_id".to_string(), "pilot_index".to_string()];
    header.extend((1..=data.devices()).map(|l| format!("sym_dev{l}")));
    header.extend(["y_re", "y_im", "h_re", "h_im", "snr_db"].map(String::from));
    w.write_record(&header)?;
    for g in &data.groups {
        for (i, p) in g.pilots.iter().enumerate() {
            let mut row = vec![g.group_id.to_string(), i.to_string()];
            row.extend(p.symbols.iter().map(|s| s.to_string()));
            row.extend(
                [p.y.re, p.y.im, g.h.re, g.h.im, g.snr_db]
                    .iter()
                    .map(|v| format!("{v:?}")),
            );
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset_csv`]. Rows of one group must be
/// contiguous.
pub fn read_dataset_csv<R: Read>(
    reader: R,
    constellation: &Constellation,
    powers: &[f64],
) -> Result<MetaDataset> {
    validate_powers(powers)?;
    let l = powers.len();
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.len() != l + 7 {
        return Err(Error::Config(format!(
            "dataset CSV has {} columns, expected {} for {l} devices",
            headers.len(),
            l + 7
        )));
    }
    let parse_f = |s: &str, col: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad value {s:?} in column {col}")))
    };
    let parse_u = |s: &str, col: &str| -> Result<usize> {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("bad value {s:?} in column {col}")))
    };
    let mut groups: Vec<PilotSet> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let group_id = parse_u(&rec[0], "group_id")?;
        let symbols = (0..l)
            .map(|d| {
                let s = parse_u(&rec[2 + d], "sym_dev")?;
                if s >= constellation.order() {
                    return Err(Error::LabelOutOfRange {
                        label: s,
                        classes: constellation.order(),
                    });
                }
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        let y = Complex64::new(parse_f(&rec[2 + l], "y_re")?, parse_f(&rec[3 + l], "y_im")?);
        let h = Complex64::new(parse_f(&rec[4 + l], "h_re")?, parse_f(&rec[5 + l], "h_im")?);
        let snr_db = parse_f(&rec[6 + l], "snr_db")?;
        match groups.last_mut() {
            Some(g) if g.group_id == group_id => g.pilots.push(Pilot { symbols, y }),
            _ => groups.push(PilotSet {
                group_id,
                h,
                snr_db,
                pilots: vec![Pilot { symbols, y }],
            }),
        }
    }
    Ok(MetaDataset {
        constellation: constellation.clone(),
        powers: powers.to_vec(),
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P41: [f64; 2] = [4.0, 1.0];

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn bpsk_points() {
        let b = bpsk();
        assert_eq!(b.order(), 2);
        assert_eq!(b.points(), &[c(1.0), c(-1.0)]);
        assert_eq!(b.mean_power(), 1.0);
        assert_ne!(b.point(0), b.point(1));
    }

    #[test]
    fn constellation_validation() {
        assert!(Constellation::new(vec![c(2.0), c(-2.0)]).is_err());
        assert!(Constellation::new(vec![c(1.0), c(1.0)]).is_err());
        let qpsk = (0..4)
            .map(|k| Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4 * (2 * k + 1) as f64))
            .collect();
        assert_eq!(Constellation::new(qpsk).unwrap().order(), 4);
    }

    #[test]
    fn superpose_examples() {
        assert_eq!(superpose(&[c(1.0), c(-1.0)], &P41).unwrap(), c(1.0));
        assert_eq!(superpose(&[c(1.0), c(1.0)], &P41).unwrap(), c(3.0));
        assert!(superpose(&[c(1.0)], &P41).is_err());
    }

    #[test]
    fn composite_constellation_is_equally_spaced() {
        let b = bpsk();
        let mut pts: Vec<f64> = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                let y = superpose_indices(&b, &[i, j], &P41);
                assert_eq!(y.im, 0.0);
                pts.push(y.re);
            }
        }
        pts.sort_by(f64::total_cmp);
        assert_eq!(pts, vec![-3.0, -1.0, 1.0, 3.0]);
    }

    #[test]
    fn noiseless_transmit() {
        let mut r = rng::stream(0, 0);
        let quiet = NoiseModel::new(0.0).unwrap();
        assert_eq!(transmit(c(3.0), c(-1.0), &quiet, &mut r), c(-3.0));
        assert_eq!(transmit(c(1.0), c(1.0), &quiet, &mut r), c(1.0));
    }

    #[test]
    fn noise_moments() {
        let mut r = rng::stream(42, 0);
        let noise = NoiseModel::new(1.0).unwrap();
        let n = 1_000_000;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut sq = 0.0;
        for _ in 0..n {
            let y = transmit(c(1.0), c(1.0), &noise, &mut r) - c(1.0);
            sum += y;
            sq += y.norm_sqr();
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean.norm_sqr();
        assert!((var - 1.0).abs() < 0.01, "variance {var}");
        assert!(mean.norm() < 5.0 * 1.0 / 1e3, "mean {mean}");
    }

    #[test]
    fn snr_mapping() {
        assert_eq!(snr_db_to_sigma2(0.0, 1.0).unwrap(), 1.0);
        let s = snr_db_to_sigma2(10.0 * 5f64.log10(), 5.0).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let s = snr_db_to_sigma2(15.0, 5.0).unwrap();
        assert!((s - 0.158_113_883_008_418_97).abs() < 1e-12);
        assert_eq!(snr_db_to_sigma2(f64::INFINITY, 5.0).unwrap(), 0.0);
        assert!(snr_db_to_sigma2(3.0, 0.0).is_err());
    }

    #[test]
    fn meta_dataset_shape() {
        let d = gen_meta_dataset(20, 8, &bpsk(), &P41, 6.0, 5).unwrap();
        assert_eq!(d.groups.len(), 20);
        assert!(d.groups.iter().all(|g| g.len() == 8));
        assert_eq!(d.groups.iter().filter(|g| g.h == c(1.0)).count(), 10);
        assert_eq!(d.groups.iter().filter(|g| g.h == c(-1.0)).count(), 10);
        assert!(d.groups[..10].iter().all(|g| g.h == c(1.0)));
        assert_eq!(d, gen_meta_dataset(20, 8, &bpsk(), &P41, 6.0, 5).unwrap());
        assert_ne!(d, gen_meta_dataset(20, 8, &bpsk(), &P41, 6.0, 6).unwrap());
    }

    #[test]
    fn meta_dataset_noiseless_consistency() {
        let b = bpsk();
        let d = gen_meta_dataset(2, 1, &b, &P41, f64::INFINITY, 1).unwrap();
        for g in &d.groups {
            for p in &g.pilots {
                assert_eq!(p.y, g.h * superpose_indices(&b, &p.symbols, &P41));
            }
        }
    }

    #[test]
    fn meta_dataset_rejects_odd_k() {
        assert!(matches!(
            gen_meta_dataset(3, 8, &bpsk(), &P41, 6.0, 0),
            Err(Error::Config(_))
        ));
        assert!(gen_meta_dataset(2, 0, &bpsk(), &P41, 6.0, 0).is_err());
    }

    #[test]
    fn target_pilots() {
        let b = bpsk();
        let t = gen_target_pilots(4, &b, &P41, Some(c(1.0)), f64::INFINITY, 3).unwrap();
        assert_eq!(t.len(), 4);
        for p in &t.pilots {
            assert_eq!(p.y, superpose_indices(&b, &p.symbols, &P41));
        }
        assert_eq!(gen_target_pilots(2, &b, &P41, None, 15.0, 3).unwrap().len(), 2);
        assert!(gen_target_pilots(0, &b, &P41, None, 15.0, 3).is_err());
    }

    #[test]
    fn target_channel_is_fair_coin() {
        let b = bpsk();
        let n = 10_000;
        let plus = (0..n)
            .filter(|s| gen_target_pilots(1, &b, &P41, None, 15.0, *s).unwrap().h == c(1.0))
            .count();
        let f = plus as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.02, "frequency {f}");
    }

    #[test]
    fn csv_roundtrip() {
        let b = bpsk();
        let d = gen_meta_dataset(4, 3, &b, &P41, 6.0, 9).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("group_id,pilot_index,sym_dev1,sym_dev2,y_re,y_im,h_re,h_im,snr_db\n"));
        let back = read_dataset_csv(&buf[..], &b, &P41).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn powers_must_descend() {
        assert!(DeviceGroupConfig::new(vec![1.0, 4.0], c(1.0)).is_err());
        assert!(DeviceGroupConfig::new(vec![4.0, 4.0], c(1.0)).is_err());
        assert!(DeviceGroupConfig::new(vec![], c(1.0)).is_err());
        assert_eq!(DeviceGroupConfig::new(vec![4.0, 1.0], c(1.0)).unwrap().devices(), 2);
    }

    proptest! {
        #[test]
        fn superpose_is_linear(
            a in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 3),
            b in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 3),
        ) {
            let powers = [9.0, 4.0, 1.0];
            let a: Vec<Complex64> = a.into_iter().map(|(r, i)| Complex64::new(r, i)).collect();
            let b: Vec<Complex64> = b.into_iter().map(|(r, i)| Complex64::new(r, i)).collect();
            let sum: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs = superpose(&sum, &powers).unwrap();
            let rhs = superpose(&a, &powers).unwrap() + superpose(&b, &powers).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
