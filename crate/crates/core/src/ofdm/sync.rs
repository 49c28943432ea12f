//! Carrier frequency offset estimation/correction and frame detection on the
//! repeated pilot pair.

use num_complex::Complex64;

use super::{rotate, Frame, OfdmConfig};
use crate::{Error, Result};

/// Normalized pilot-pair correlation required to declare a frame.
pub const DETECTION_THRESHOLD: f64 = 0.5;

/// Repeated-symbol CFO estimate.
///
/// With the two pilots spaced `D = n_sub + n_cp` samples apart,
/// `Δf = -arg(Σ_{ℓ<n_sub} y(t0+ℓ)·y*(t0+D+ℓ)) / (2π·D·Ts)`.
/// Offsets are unambiguous for `|Δf| < fs / (2D)`; larger offsets alias.
pub fn estimate_cfo(rx: &[Complex64], t0: usize, config: &OfdmConfig) -> Result<f64> {
    let d = config.symbol_len();
    let needed = t0 + d + config.n_sub;
    if rx.len() < needed || rx.len() < t0 + 2 * d {
        return Err(Error::InsufficientSamples {
            needed: (t0 + 2 * d).max(needed),
            available: rx.len(),
        });
    }
    let acc = pair_correlation(rx, t0, d, config.n_sub);
    Ok(cfo_from_correlation(acc, config))
}

fn pair_correlation(rx: &[Complex64], t0: usize, spacing: usize, len: usize) -> Complex64 {
    rx[t0..t0 + len]
        .iter()
        .zip(&rx[t0 + spacing..t0 + spacing + len])
        .map(|(a, b)| a * b.conj())
        .sum()
}

fn cfo_from_correlation(acc: Complex64, config: &OfdmConfig) -> f64 {
    let d = config.symbol_len() as f64;
    -acc.arg() / (2.0 * std::f64::consts::PI * d * config.sample_period_s())
}

/// Removes a CFO: multiplies sample `n` by `exp(-j2π·cfo·n/fs)`.
pub fn correct_cfo(rx: &[Complex64], cfo_hz: f64, config: &OfdmConfig) -> Vec<Complex64> {
    let mut out = rx.to_vec();
    rotate(&mut out, -cfo_hz, config.sample_rate_hz, 0);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    /// Start of the first pilot symbol (cyclic prefix included).
    pub t0: usize,
    /// Normalized pilot-pair correlation at coarse timing.
    pub metric: f64,
    /// CFO estimated jointly across antennas at coarse timing.
    pub cfo_hz: f64,
}

/// Finds sounding frames in multi-antenna streams.
///
/// Coarse timing uses the normalized correlation between samples one symbol apart,
/// summed over antennas, which is close to one while the window lies within the
/// repeated pilot pair. Fine timing maximizes the cross-correlation with the known
/// pilot body after removing the coarse CFO. Only frames whose three symbols fit in
/// the streams are reported.
pub fn detect_frames(streams: &[Vec<Complex64>], frame: &Frame, threshold: f64) -> Result<Vec<Detection>> {
    let config = &frame.config;
    let len = streams.iter().map(Vec::len).min().unwrap_or(0);
    let d = config.symbol_len();
    let n = config.n_sub;
    if streams.is_empty() || len < 2 * d {
        return Err(Error::InsufficientSamples {
            needed: 2 * d,
            available: len,
        });
    }
    // Prefix sums of y(t)·y*(t+D) and |y|² over antennas.
    let span = len - d;
    let mut corr = vec![Complex64::new(0.0, 0.0); span + 1];
    let mut energy = vec![0.0f64; len + 1];
    for s in streams {
        for t in 0..span {
            corr[t + 1] += s[t] * s[t + d].conj();
        }
        for t in 0..len {
            energy[t + 1] += s[t].norm_sqr();
        }
    }
    for t in 0..span {
        let prev = corr[t];
        corr[t + 1] += prev;
    }
    for t in 0..len {
        let prev = energy[t];
        energy[t + 1] += prev;
    }
    let last = len - d - n;
    let metric = |t: usize| -> (f64, Complex64) {
        let p = corr[t + n] - corr[t];
        let e1 = energy[t + n] - energy[t];
        let e2 = energy[t + d + n] - energy[t + d];
        let denom = (e1 * e2).sqrt();
        if denom > 0.0 {
            (p.norm() / denom, p)
        } else {
            (0.0, p)
        }
    };

    let pilot = frame.pilot_body();
    let mut found = Vec::new();
    let mut peak = 0.0f64;
    let mut t = 0;
    while t <= last {
        let (m, _) = metric(t);
        peak = peak.max(m);
        if m < threshold {
            t += 1;
            continue;
        }
        // Extent of the plateau above threshold; keep the best coarse point.
        let run_start = t;
        let (mut best_t, mut best_m) = (t, m);
        while t <= last {
            let (m2, _) = metric(t);
            if m2 < threshold {
                break;
            }
            peak = peak.max(m2);
            if m2 > best_m {
                best_m = m2;
                best_t = t;
            }
            t += 1;
        }
        let run_end = t - 1;
        let (_, p) = metric(best_t);
        let cfo = -p.arg() / (2.0 * std::f64::consts::PI * d as f64 * config.sample_period_s());

        // Fine timing: candidates from one prefix before the plateau to its end.
        let lo = run_start.saturating_sub(config.n_cp);
        let hi = run_end;
        let seg_start = lo + config.n_cp;
        let seg_end = hi + config.n_cp + n;
        let derotated: Vec<Vec<Complex64>> = streams
            .iter()
            .map(|s| {
                let mut seg = s[seg_start..seg_end].to_vec();
                rotate(&mut seg, -cfo, config.sample_rate_hz, seg_start);
                seg
            })
            .collect();
        let mut fine = (lo, -1.0f64);
        for cand in lo..=hi {
            let off = cand - lo;
            let score: f64 = derotated
                .iter()
                .map(|seg| {
                    let acc: Complex64 = seg[off..off + n].iter().zip(pilot).map(|(y, p)| y * p.conj()).sum();
                    acc.norm_sqr()
                })
                .sum();
            if score > fine.1 {
                fine = (cand, score);
            }
        }
        let t0 = fine.0;
        if t0 + config.frame_len() <= len {
            found.push(Detection {
                t0,
                metric: best_m,
                cfo_hz: cfo,
            });
            t = t.max(t0 + config.frame_len() - d);
        }
    }
    if found.is_empty() {
        return Err(Error::NoFrameDetected {
            peak_metric: peak,
            threshold,
        });
    }
    Ok(found)
}
