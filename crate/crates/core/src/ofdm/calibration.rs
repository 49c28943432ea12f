//! Per-chain phase/gain calibration and SNR bookkeeping.

use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::cmath::{db10, wrap_phase};
use crate::dataset::{CsiMatrix, CsiRecord};
use crate::{Error, Result};

/// Calibration of the receive chains for one snapshot.
///
/// `ref_phase` is the phase each chain observes from the fixed reference transmitter;
/// `gain_scale` aligns the chains' noise floors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationState {
    pub ref_phase: Vec<f64>,
    pub noise_floor_db: Vec<f64>,
    pub gain_scale: Vec<f64>,
}

impl CalibrationState {
    pub fn identity(n_antennas: usize) -> Self {
        Self {
            ref_phase: vec![0.0; n_antennas],
            noise_floor_db: vec![0.0; n_antennas],
            gain_scale: vec![1.0; n_antennas],
        }
    }

    /// Builds the state from the reference-transmitter response seen by each chain
    /// and each chain's noise floor. Gains bring every noise floor to the mean
    /// floor (in dB); non-finite floors (noiseless input) leave gains at one.
    pub fn from_measurements(reference: &[Complex64], noise_floor_db: &[f64]) -> Result<Self> {
        if reference.len() != noise_floor_db.len() {
            return Err(Error::arg("reference and noise-floor lengths differ"));
        }
        if reference.iter().any(|z| !z.is_finite()) {
            return Err(Error::arg("non-finite reference response"));
        }
        let ref_phase = reference.iter().map(|z| wrap_phase(z.arg())).collect();
        let gain_scale = if noise_floor_db.iter().all(|v| v.is_finite()) && !noise_floor_db.is_empty() {
            let target = noise_floor_db.iter().sum::<f64>() / noise_floor_db.len() as f64;
            noise_floor_db.iter().map(|nf| 10f64.powf((target - nf) / 20.0)).collect()
        } else {
            vec![1.0; noise_floor_db.len()]
        };
        let state = Self {
            ref_phase,
            noise_floor_db: noise_floor_db.to_vec(),
            gain_scale,
        };
        Ok(state)
    }

    pub fn n_antennas(&self) -> usize {
        self.ref_phase.len()
    }

    /// Noise floor of each chain after gain alignment.
    pub fn aligned_noise_floor_db(&self) -> Vec<f64> {
        self.noise_floor_db
            .iter()
            .zip(&self.gain_scale)
            .map(|(nf, g)| nf + 20.0 * g.log10())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ref_phase.len();
        if self.gain_scale.len() != n || self.noise_floor_db.len() != n {
            return Err(Error::arg("calibration vectors have different lengths"));
        }
        for (i, (&p, &g)) in self.ref_phase.iter().zip(&self.gain_scale).enumerate() {
            if !p.is_finite() || !g.is_finite() {
                return Err(Error::arg(format!("non-finite calibration entry for antenna {i}")));
            }
            if g <= 0.0 {
                return Err(Error::arg(format!("gain scale of antenna {i} must be positive")));
            }
        }
        Ok(())
    }
}

/// Row `i` is multiplied by `gain_scale[i]·exp(-j·ref_phase[i])`.
pub fn calibrate(h: &CsiMatrix, cal: &CalibrationState) -> Result<CsiMatrix> {
    cal.validate()?;
    if cal.n_antennas() != h.n_antennas() {
        return Err(Error::arg(format!(
            "calibration covers {} antennas, matrix has {}",
            cal.n_antennas(),
            h.n_antennas()
        )));
    }
    let mut out = h.clone();
    for a in 0..h.n_antennas() {
        let w = Complex64::from_polar(cal.gain_scale[a], -cal.ref_phase[a]);
        for z in out.row_mut(a) {
            let v = Complex64::new(z.re as f64, z.im as f64) * w;
            *z = Complex32::new(v.re as f32, v.im as f32);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SnrAveraging {
    /// Mean of per-antenna dB values.
    #[default]
    Db,
    /// dB of the mean linear SNR.
    Linear,
}

/// Per-antenna SNR in dB: mean power over the used bins minus the noise floor.
pub fn per_antenna_snr_db(h: &CsiMatrix, noise_floor_db: &[f64]) -> Result<Vec<f64>> {
    if noise_floor_db.len() != h.n_antennas() {
        return Err(Error::arg("one noise floor per antenna required"));
    }
    if noise_floor_db.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("noise floors must be finite"));
    }
    Ok((0..h.n_antennas())
        .map(|a| {
            let row = h.row(a);
            let p = row.iter().map(|z| z.norm_sqr() as f64).sum::<f64>() / row.len() as f64;
            db10(p) - noise_floor_db[a]
        })
        .collect())
}

pub fn mean_snr(record: &CsiRecord, noise_floor_db: &[f64]) -> Result<f64> {
    mean_snr_with(record, noise_floor_db, SnrAveraging::Db)
}

pub fn mean_snr_with(record: &CsiRecord, noise_floor_db: &[f64], averaging: SnrAveraging) -> Result<f64> {
    let per = per_antenna_snr_db(&record.h, noise_floor_db)?;
    let n = per.len() as f64;
    Ok(match averaging {
        SnrAveraging::Db => per.iter().sum::<f64>() / n,
        SnrAveraging::Linear => db10(per.iter().map(|&v| 10f64.powf(v / 10.0)).sum::<f64>() / n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CsiMatrix, GpsTag};

    fn matrix(rows: &[Vec<Complex64>]) -> CsiMatrix {
        CsiMatrix::from_rows_f64(rows).unwrap()
    }

    fn record(rows: &[Vec<Complex64>]) -> CsiRecord {
        CsiRecord::new(GpsTag::at(0.0, 0.0, 0.0), matrix(rows))
    }

    #[test]
    fn identity_calibration() {
        let m = matrix(&[vec![Complex64::new(0.3, -0.2); 5], vec![Complex64::new(1.0, 2.0); 5]]);
        assert_eq!(calibrate(&m, &CalibrationState::identity(2)).unwrap(), m);
    }

    #[test]
    fn reference_phases_align() {
        let phi = 0.9;
        let tone = [Complex64::from_polar(1.0, phi), Complex64::from_polar(1.0, -phi)];
        let cal = CalibrationState::from_measurements(&tone, &[-30.0, -30.0]).unwrap();
        let m = matrix(&[vec![tone[0]; 4], vec![tone[1]; 4]]);
        let out = calibrate(&m, &cal).unwrap();
        let p0 = out.get(0, 0).arg();
        let p1 = out.get(1, 0).arg();
        assert!((p0 - p1).abs() < 1e-6);
    }

    #[test]
    fn noise_floors_align() {
        // Rows carry pure noise at different powers; after gain alignment their
        // powers agree within 0.1 dB.
        let floors = [-20.0, -27.5, -33.0];
        let mut rng = crate::seed::rng(4);
        let rows: Vec<Vec<Complex64>> = floors
            .iter()
            .map(|&nf| {
                let mut r = vec![Complex64::new(0.0, 0.0); 20_000];
                crate::ofdm::add_noise(&mut r, (10f64.powf(nf / 10.0) / 2.0).sqrt(), &mut rng);
                r
            })
            .collect();
        let m = matrix(&rows);
        let measured: Vec<f64> = (0..3)
            .map(|a| db10(m.row(a).iter().map(|z| z.norm_sqr() as f64).sum::<f64>() / 20_000.0))
            .collect();
        let cal = CalibrationState::from_measurements(&[Complex64::new(1.0, 0.0); 3], &measured).unwrap();
        let out = calibrate(&m, &cal).unwrap();
        let after: Vec<f64> = (0..3)
            .map(|a| db10(out.row(a).iter().map(|z| z.norm_sqr() as f64).sum::<f64>() / 20_000.0))
            .collect();
        for w in after.windows(2) {
            assert!((w[0] - w[1]).abs() < 0.1, "{after:?}");
        }
        for (a, b) in cal.aligned_noise_floor_db().iter().zip(&after) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn non_finite_calibration_rejected() {
        let m = matrix(&[vec![Complex64::new(1.0, 0.0); 3]]);
        let mut cal = CalibrationState::identity(1);
        cal.gain_scale[0] = f64::NAN;
        assert!(calibrate(&m, &cal).is_err());
        cal.gain_scale[0] = 0.0;
        assert!(calibrate(&m, &cal).is_err());
    }

    #[test]
    fn mean_snr_examples() {
        let r = record(&vec![vec![Complex64::new(1.0, 0.0); 8]; 4]);
        assert!((mean_snr(&r, &[-30.0; 4]).unwrap() - 30.0).abs() < 1e-9);
        // Rows at 20 dB and 40 dB SNR (noise floor 0 dB).
        let r = record(&[vec![Complex64::new(10.0, 0.0); 8], vec![Complex64::new(100.0, 0.0); 8]]);
        assert!((mean_snr(&r, &[0.0, 0.0]).unwrap() - 30.0).abs() < 1e-6);
        let lin = mean_snr_with(&r, &[0.0, 0.0], SnrAveraging::Linear).unwrap();
        assert!((lin - db10((100.0 + 10_000.0) / 2.0)).abs() < 1e-6);
    }
}
