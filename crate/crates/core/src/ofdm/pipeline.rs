//! End-to-end sounding: synthesizing captures from known channels and extracting
//! calibrated CSI records from captures.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use super::iq::{IqCapture, IqHeader};
use super::{
    bits_to_id, build_frame, calibrate, detect_frames, estimate_csi, filter_symbols, id_to_bits, pilot_spectrum,
    rotate, CalibrationState, TapProjector, DEFAULT_TAPS, DETECTION_THRESHOLD,
};
use crate::cmath::{db10, from_db10};
use crate::dataset::{CsiMatrix, CsiRecord, Dataset, GpsTag, Origin};
use crate::{Error, Result};

/// SNR reported for chains whose noise floor is below numerical resolution.
pub const MAX_SNR_DB: f64 = 200.0;
/// Noise floors this far below the signal are treated as absent.
const NOISELESS_MARGIN_DB: f64 = 150.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopbackOptions {
    pub pilot_seed: u64,
    pub cfo_hz: f64,
    /// Receiver noise power per sample in dB relative to the dataset's unit noise
    /// floor; `None` produces a noiseless capture.
    pub noise_db: Option<f64>,
    /// Per-chain phase offsets (radians); empty for none.
    pub chain_phase: Vec<f64>,
    /// Per-chain gain offsets (dB); re-centred to zero mean. Empty for none.
    pub chain_gain_db: Vec<f64>,
    /// Silence before and between frames, in samples.
    pub gap: usize,
    pub seed: u64,
}

impl Default for LoopbackOptions {
    fn default() -> Self {
        Self {
            pilot_seed: 1,
            cfo_hz: 0.0,
            noise_db: None,
            chain_phase: Vec::new(),
            chain_gain_db: Vec::new(),
            gap: 512,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Loopback {
    pub capture: IqCapture,
    /// The channels actually carried by the capture: each record scaled to unit
    /// mean power (an ideal AGC), chain offsets excluded.
    pub truth: Dataset,
}

/// Sends one frame per record through its channel and the receive chains.
/// Frame `i` carries identifier `i`; the sidecar maps identifiers to GPS tags.
pub fn loopback(dataset: &Dataset, opts: &LoopbackOptions) -> Result<Loopback> {
    dataset.validate()?;
    let config = &dataset.config;
    let n_ant = dataset.n_antennas();
    let m = dataset.len();
    if m > u32::MAX as usize {
        return Err(Error::arg("too many records for 32-bit frame identifiers"));
    }
    let phase = per_chain(&opts.chain_phase, n_ant, "chain_phase")?;
    let mut gain_db = per_chain(&opts.chain_gain_db, n_ant, "chain_gain_db")?;
    let mean_gain = gain_db.iter().sum::<f64>() / n_ant as f64;
    gain_db.iter_mut().for_each(|g| *g -= mean_gain);
    let chain: Vec<Complex64> = phase
        .iter()
        .zip(&gain_db)
        .map(|(&p, &g)| Complex64::from_polar(from_db10(g / 2.0), p))
        .collect();

    let flen = config.frame_len();
    let slot = flen + opts.gap;
    let n_samples = opts.gap + m * slot;
    let mut streams = vec![vec![Complex64::new(0.0, 0.0); n_samples]; n_ant];
    let mut truth = Vec::with_capacity(m);
    let mut t0s = Vec::with_capacity(m);
    let mut gps = BTreeMap::new();
    let mut scales = Vec::with_capacity(m);
    for (i, r) in dataset.records.iter().enumerate() {
        let p = r.mean_power();
        let s = if p > 0.0 { 1.0 / p.sqrt() } else { 1.0 };
        scales.push(s);
        let rows: Vec<Vec<Complex64>> = (0..n_ant)
            .map(|a| r.h.row_f64(a).into_iter().map(|z| z * s).collect())
            .collect();
        let frame = build_frame(config, opts.pilot_seed, &id_to_bits(i as u32))?;
        let t0 = opts.gap + i * slot;
        for (a, row) in rows.iter().enumerate() {
            let h: Vec<Complex64> = row.iter().map(|z| z * chain[a]).collect();
            let y = filter_symbols(config, &frame.samples, &h)?;
            streams[a][t0..t0 + flen].copy_from_slice(&y);
        }
        let mut h = CsiMatrix::from_rows_f64(&rows)?;
        // Keep the stored truth at the precision the capture can represent.
        h = CsiMatrix::new(h.n_antennas(), h.n_subcarriers(), h.as_slice().to_vec())?;
        truth.push(CsiRecord {
            tag: r.tag,
            h,
            snr_db: r.snr_db.clone(),
        });
        t0s.push(t0);
        gps.insert(i as u32, r.tag);
    }
    let mut rng = crate::seed::rng(opts.seed);
    for (a, s) in streams.iter_mut().enumerate() {
        rotate(s, opts.cfo_hz, config.sample_rate_hz, 0);
        if let Some(nd) = opts.noise_db {
            let g = chain[a].norm();
            for i in 0..m {
                let lo = if i == 0 { 0 } else { opts.gap + i * slot };
                let hi = opts.gap + (i + 1) * slot;
                let sigma = scales[i] * g * (from_db10(nd) / 2.0).sqrt();
                super::add_noise(&mut s[lo..hi], sigma, &mut rng);
            }
        }
    }
    let header = IqHeader {
        config: config.clone(),
        n_antennas: n_ant,
        n_samples,
        pilot_seed: opts.pilot_seed,
        t0_candidates: t0s,
        ref_phase: phase,
        gps,
    };
    Ok(Loopback {
        capture: IqCapture { header, streams },
        truth: Dataset {
            config: config.clone(),
            records: truth,
            origin: dataset.origin,
            seed: dataset.seed,
        },
    })
}

fn per_chain(v: &[f64], n: usize, what: &str) -> Result<Vec<f64>> {
    match v.len() {
        0 => Ok(vec![0.0; n]),
        k if k == n => {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::arg(format!("{what} must be finite")));
            }
            Ok(v.to_vec())
        }
        k => Err(Error::arg(format!("{what} has {k} entries for {n} antennas"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractOptions {
    pub n_taps: usize,
    pub threshold: f64,
    /// Snap detected timing to the sidecar's frame-start hints when one lies
    /// within a cyclic prefix.
    pub use_hints: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            n_taps: DEFAULT_TAPS,
            threshold: DETECTION_THRESHOLD,
            use_hints: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameReport {
    pub t0: usize,
    pub detected_t0: usize,
    pub metric: f64,
    pub cfo_hz: f64,
    pub id: u32,
    pub noise_floor_db: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub dataset: Dataset,
    pub frames: Vec<FrameReport>,
}

/// Detection, CFO removal, LS estimation, delay-domain denoising and per-chain
/// calibration; one record per detected frame.
pub fn extract(capture: &IqCapture, opts: &ExtractOptions) -> Result<Extraction> {
    capture.validate()?;
    let h = &capture.header;
    let config = &h.config;
    let frame = build_frame(config, h.pilot_seed, &[])?;
    let projector = TapProjector::new(config, opts.n_taps)?;
    let detections = detect_frames(&capture.streams, &frame, opts.threshold)?;
    let bins = config.used_bins();
    let mask = config.used_mask();
    let d = config.symbol_len();
    let flen = config.frame_len();
    let n_ant = h.n_antennas;

    let mut records = Vec::with_capacity(detections.len());
    let mut frames = Vec::with_capacity(detections.len());
    for (index, det) in detections.iter().enumerate() {
        let mut t0 = det.t0;
        if opts.use_hints {
            if let Some(&hint) = h
                .t0_candidates
                .iter()
                .filter(|&&c| c.abs_diff(det.t0) <= config.n_cp && c + flen <= h.n_samples)
                .min_by_key(|&&c| c.abs_diff(det.t0))
            {
                t0 = hint;
            }
        }
        let mut rows = Vec::with_capacity(n_ant);
        let mut floors = Vec::with_capacity(n_ant);
        let mut combined = vec![Complex64::new(0.0, 0.0); bins.len()];
        for s in &capture.streams {
            let mut seg = s[t0..t0 + flen].to_vec();
            rotate(&mut seg, -det.cfo_hz, config.sample_rate_hz, t0);
            let est = projector.project(&estimate_csi(&seg, &frame, 0)?)?;
            let y1 = pilot_spectrum(&seg, config, 0)?;
            let y2 = pilot_spectrum(&seg, config, d)?;
            let y3 = pilot_spectrum(&seg, config, 2 * d)?;
            floors.push(noise_floor_db(&y1, &y2, &mask, &est));
            for ((c, &b), hk) in combined.iter_mut().zip(&bins).zip(&est) {
                *c += hk.conj() * y3[b];
            }
            rows.push(est);
        }
        let id = bits_to_id(&combined.iter().take(32).map(|z| z.re < 0.0).collect::<Vec<_>>());
        let tag = if h.gps.is_empty() {
            let mut t = GpsTag::at(0.0, 0.0, 0.0);
            t.timestamp = t0 as f64 * config.sample_period_s();
            t
        } else {
            *h.gps.get(&id).ok_or_else(|| Error::InvalidRecord {
                index,
                message: format!("frame identifier {id} has no GPS entry"),
            })?
        };
        let raw = CsiMatrix::from_rows_f64(&rows)?;
        let snr_db = rows
            .iter()
            .zip(&floors)
            .map(|(r, nf)| {
                let p = crate::cmath::norm_sqr(r) / r.len() as f64;
                (db10(p) - nf).min(MAX_SNR_DB) as f32
            })
            .collect();
        let reference: Vec<Complex64> = if h.ref_phase.is_empty() {
            vec![Complex64::new(1.0, 0.0); n_ant]
        } else {
            h.ref_phase.iter().map(|&p| Complex64::from_polar(1.0, p)).collect()
        };
        let cal = CalibrationState::from_measurements(&reference, &floors)?;
        records.push(CsiRecord {
            tag,
            h: calibrate(&raw, &cal)?,
            snr_db,
        });
        frames.push(FrameReport {
            t0,
            detected_t0: det.t0,
            metric: det.metric,
            cfo_hz: det.cfo_hz,
            id,
            noise_floor_db: floors,
        });
    }
    Ok(Extraction {
        dataset: Dataset {
            config: config.clone(),
            records,
            origin: Origin::Measured,
            seed: None,
        },
        frames,
    })
}

/// Per-bin noise power: guard bins of both pilots plus half the squared
/// difference of the two pilots on the used bins. `-inf` when the floor is
/// indistinguishable from numerical residue.
fn noise_floor_db(y1: &[Complex64], y2: &[Complex64], mask: &[bool], est: &[Complex64]) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for (b, &used) in mask.iter().enumerate() {
        if used {
            acc += (y1[b] - y2[b]).norm_sqr() / 2.0;
            n += 1;
        } else {
            acc += y1[b].norm_sqr() + y2[b].norm_sqr();
            n += 2;
        }
    }
    let nf = db10(acc / n as f64);
    let signal = db10(crate::cmath::norm_sqr(est) / est.len() as f64);
    if !nf.is_finite() || nf < signal - NOISELESS_MARGIN_DB {
        f64::NEG_INFINITY
    } else {
        nf
    }
}
