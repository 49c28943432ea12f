//! OFDM sounding chain: frame construction, simulated propagation, CFO handling,
//! least-squares channel estimation, delay-domain denoising and calibration.
//!
//! Frequency/time conversions use the unitary DFT, so a unit-magnitude pilot on a
//! subcarrier and a unit-power channel coefficient give a unit-power received bin.

mod calibration;
mod estimate;
pub mod iq;
pub mod pipeline;
mod sync;

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use calibration::{calibrate, mean_snr, mean_snr_with, per_antenna_snr_db, CalibrationState, SnrAveraging};
pub use estimate::{denoise_truncate, estimate_csi, pilot_spectrum, TapProjector, DEFAULT_TAPS};
pub use sync::{correct_cfo, detect_frames, estimate_cfo, Detection, DETECTION_THRESHOLD};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Size of the serialized [`OfdmConfig`] block in dataset headers.
pub const CONFIG_BLOCK_LEN: usize = 64;

/// Symbol and subcarrier layout of the sounding waveform.
///
/// Subcarriers are addressed by signed index `s ∈ [-n_sub/2, n_sub/2)`. The lowest
/// `n_guard_low` and highest `n_guard_high` indices are nulled, as is `s = 0` when
/// `dc_null` is set. The used mask is derived from these fields, so the used count is
/// always `n_sub - n_guard_low - n_guard_high - dc_null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub n_sub: usize,
    pub n_cp: usize,
    pub sample_rate_hz: f64,
    pub carrier_hz: f64,
    pub n_guard_low: usize,
    pub n_guard_high: usize,
    pub dc_null: bool,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            n_sub: 1024,
            n_cp: 256,
            sample_rate_hz: 20e6,
            carrier_hz: 1.27e9,
            n_guard_low: 50,
            n_guard_high: 49,
            dc_null: true,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sub < 2 || self.n_sub % 2 != 0 {
            return Err(Error::config(format!("n_sub must be even and >= 2, got {}", self.n_sub)));
        }
        if self.n_cp >= self.n_sub {
            return Err(Error::config(format!(
                "cyclic prefix ({}) must be shorter than the symbol ({})",
                self.n_cp, self.n_sub
            )));
        }
        let nulls = self.n_guard_low + self.n_guard_high + usize::from(self.dc_null);
        if self.n_guard_low > self.n_sub / 2 || self.n_guard_high >= self.n_sub / 2 || nulls >= self.n_sub {
            return Err(Error::config("guard bands leave no usable subcarriers"));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::config("sample_rate_hz must be positive and finite"));
        }
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(Error::config("carrier_hz must be positive and finite"));
        }
        Ok(())
    }

    pub fn n_used(&self) -> usize {
        self.n_sub - self.n_guard_low - self.n_guard_high - usize::from(self.dc_null)
    }

    /// Samples per OFDM symbol including the cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.n_sub + self.n_cp
    }

    /// Two pilot symbols and one data symbol.
    pub fn frame_len(&self) -> usize {
        3 * self.symbol_len()
    }

    pub fn sample_period_s(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.sample_rate_hz / self.n_sub as f64
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Largest CFO magnitude the repeated-pilot estimator resolves without aliasing.
    pub fn max_unambiguous_cfo_hz(&self) -> f64 {
        self.sample_rate_hz / (2.0 * self.symbol_len() as f64)
    }

    /// Signed subcarrier indices of the used bins, ascending in frequency.
    pub fn used_indices(&self) -> Vec<i64> {
        let half = (self.n_sub / 2) as i64;
        let lo = -half + self.n_guard_low as i64;
        let hi = half - 1 - self.n_guard_high as i64;
        (lo..=hi).filter(|&s| !(self.dc_null && s == 0)).collect()
    }

    /// DFT bin (0..n_sub) of each used subcarrier, in the order of [`Self::used_indices`].
    pub fn used_bins(&self) -> Vec<usize> {
        self.used_indices().into_iter().map(|s| self.bin_of(s)).collect()
    }

    /// Used mask in DFT bin order.
    pub fn used_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_sub];
        for b in self.used_bins() {
            mask[b] = true;
        }
        mask
    }

    pub fn bin_of(&self, signed_index: i64) -> usize {
        signed_index.rem_euclid(self.n_sub as i64) as usize
    }

    /// Baseband frequency offset of each used subcarrier, Hz.
    pub fn used_frequencies_hz(&self) -> Vec<f64> {
        let df = self.subcarrier_spacing_hz();
        self.used_indices().into_iter().map(|s| s as f64 * df).collect()
    }

    /// Fixed 64-byte little-endian block: n_sub u32, n_cp u32, sample_rate f64,
    /// carrier f64, n_guard_low u32, n_guard_high u32, dc_null u8, zero padding.
    pub fn to_block(&self) -> [u8; CONFIG_BLOCK_LEN] {
        let mut b = [0u8; CONFIG_BLOCK_LEN];
        b[0..4].copy_from_slice(&(self.n_sub as u32).to_le_bytes());
        b[4..8].copy_from_slice(&(self.n_cp as u32).to_le_bytes());
        b[8..16].copy_from_slice(&self.sample_rate_hz.to_le_bytes());
        b[16..24].copy_from_slice(&self.carrier_hz.to_le_bytes());
        b[24..28].copy_from_slice(&(self.n_guard_low as u32).to_le_bytes());
        b[28..32].copy_from_slice(&(self.n_guard_high as u32).to_le_bytes());
        b[32] = u8::from(self.dc_null);
        b
    }

    pub fn from_block(b: &[u8; CONFIG_BLOCK_LEN]) -> Result<Self> {
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap()) as usize;
        let f64_at = |i: usize| f64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let dc_null = match b[32] {
            0 => false,
            1 => true,
            v => return Err(Error::config(format!("dc_null flag must be 0 or 1, got {v}"))),
        };
        let cfg = Self {
            n_sub: u32_at(0),
            n_cp: u32_at(4),
            sample_rate_hz: f64_at(8),
            carrier_hz: f64_at(16),
            n_guard_low: u32_at(24),
            n_guard_high: u32_at(28),
            dc_null,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub(crate) fn transform(&self) -> Transform {
        Transform::new(self.n_sub)
    }
}

/// Unitary forward/inverse DFT of a fixed size.
#[derive(Clone)]
pub(crate) struct Transform {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Transform {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
        buf.iter_mut().for_each(|z| *z *= self.scale);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
        buf.iter_mut().for_each(|z| *z *= self.scale);
    }
}

/// One sounding frame: pilot, pilot, BPSK data.
#[derive(Debug, Clone)]
pub struct Frame {
    pub config: OfdmConfig,
    /// Time-domain samples, `3 · (n_sub + n_cp)` long.
    pub samples: Vec<Complex64>,
    /// Pilot symbol on the used subcarriers (ascending frequency).
    pub pilot_freq: Vec<Complex64>,
    /// Data symbol on the used subcarriers; the leading entries carry `data_bits`.
    pub data_freq: Vec<Complex64>,
    pub data_bits: Vec<bool>,
}

impl Frame {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 * self.config.sample_period_s()
    }

    /// Start offsets of the three symbols (CP included) within the frame.
    pub fn symbol_starts(&self) -> [usize; 3] {
        let l = self.config.symbol_len();
        [0, l, 2 * l]
    }

    /// Time-domain pilot symbol body (without CP).
    pub fn pilot_body(&self) -> &[Complex64] {
        let c = &self.config;
        &self.samples[c.n_cp..c.n_cp + c.n_sub]
    }
}

/// Pilot symbols: unit-magnitude QPSK drawn from `pilot_seed`. Data bins beyond
/// `data_bits` are padded with BPSK from the same generator so every used bin is
/// occupied.
pub fn build_frame(config: &OfdmConfig, pilot_seed: u64, data_bits: &[bool]) -> Result<Frame> {
    config.validate()?;
    let n_used = config.n_used();
    if data_bits.len() > n_used {
        return Err(Error::arg(format!(
            "{} data bits exceed the {} used subcarriers",
            data_bits.len(),
            n_used
        )));
    }
    let mut rng = crate::seed::rng(pilot_seed);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let pilot_freq: Vec<Complex64> = (0..n_used)
        .map(|_| {
            let q: u8 = rng.random_range(0..4);
            let re = if q & 1 == 0 { a } else { -a };
            let im = if q & 2 == 0 { a } else { -a };
            Complex64::new(re, im)
        })
        .collect();
    let data_freq: Vec<Complex64> = (0..n_used)
        .map(|i| {
            let bit = match data_bits.get(i) {
                Some(&b) => b,
                None => rng.random::<bool>(),
            };
            bpsk(bit)
        })
        .collect();

    let tf = config.transform();
    let bins = config.used_bins();
    let mut samples = Vec::with_capacity(config.frame_len());
    for sym in [&pilot_freq, &pilot_freq, &data_freq] {
        let body = symbol_time(config, &tf, &bins, sym);
        append_with_cp(&mut samples, &body, config.n_cp);
    }
    Ok(Frame {
        config: config.clone(),
        samples,
        pilot_freq,
        data_freq,
        data_bits: data_bits.to_vec(),
    })
}

/// BPSK mapping: `false → +1`, `true → -1`.
pub fn bpsk(bit: bool) -> Complex64 {
    Complex64::new(if bit { -1.0 } else { 1.0 }, 0.0)
}

/// Little-endian bit expansion of a 32-bit identifier.
pub fn id_to_bits(id: u32) -> Vec<bool> {
    (0..32).map(|i| (id >> i) & 1 == 1).collect()
}

pub fn bits_to_id(bits: &[bool]) -> u32 {
    bits.iter()
        .take(32)
        .enumerate()
        .fold(0u32, |acc, (i, &b)| acc | (u32::from(b) << i))
}

fn symbol_time(config: &OfdmConfig, tf: &Transform, bins: &[usize], used: &[Complex64]) -> Vec<Complex64> {
    let mut grid = vec![Complex64::new(0.0, 0.0); config.n_sub];
    for (&b, &v) in bins.iter().zip(used) {
        grid[b] = v;
    }
    tf.inverse(&mut grid);
    grid
}

fn append_with_cp(out: &mut Vec<Complex64>, body: &[Complex64], n_cp: usize) {
    out.extend_from_slice(&body[body.len() - n_cp..]);
    out.extend_from_slice(body);
}

/// Applies a per-subcarrier channel to every symbol of `samples` (a whole number of
/// CP-prefixed symbols). Equivalent to circular convolution of each symbol body.
pub fn filter_symbols(config: &OfdmConfig, samples: &[Complex64], h_freq: &[Complex64]) -> Result<Vec<Complex64>> {
    let n_used = config.n_used();
    if h_freq.len() != n_used {
        return Err(Error::arg(format!(
            "channel has {} coefficients, expected {}",
            h_freq.len(),
            n_used
        )));
    }
    let l = config.symbol_len();
    if samples.len() % l != 0 {
        return Err(Error::arg("sample count is not a whole number of symbols"));
    }
    let tf = config.transform();
    let bins = config.used_bins();
    let mask = config.used_mask();
    let mut out = Vec::with_capacity(samples.len());
    for sym in samples.chunks_exact(l) {
        let mut grid = sym[config.n_cp..].to_vec();
        tf.forward(&mut grid);
        for (b, z) in grid.iter_mut().enumerate() {
            if !mask[b] {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        for (&b, &h) in bins.iter().zip(h_freq) {
            grid[b] *= h;
        }
        tf.inverse(&mut grid);
        append_with_cp(&mut out, &grid, config.n_cp);
    }
    Ok(out)
}

/// Multiplies sample `n` by `exp(j2π·cfo·(start + n)/fs)`.
pub fn rotate(samples: &mut [Complex64], cfo_hz: f64, sample_rate_hz: f64, start: usize) {
    if cfo_hz == 0.0 {
        return;
    }
    let w = 2.0 * std::f64::consts::PI * cfo_hz / sample_rate_hz;
    for (n, z) in samples.iter_mut().enumerate() {
        *z *= Complex64::from_polar(1.0, w * (start + n) as f64);
    }
}

/// Adds circular white Gaussian noise at `snr_db` relative to the mean sample power
/// of `samples`. `snr_db = +∞` adds nothing.
pub fn add_awgn<R: Rng + ?Sized>(samples: &mut [Complex64], snr_db: f64, rng: &mut R) {
    if snr_db == f64::INFINITY || samples.is_empty() {
        return;
    }
    let power = samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / samples.len() as f64;
    let sigma = (power / crate::cmath::from_db10(snr_db) / 2.0).sqrt();
    add_noise(samples, sigma, rng);
}

/// Adds noise with standard deviation `sigma` per real dimension.
pub fn add_noise<R: Rng + ?Sized>(samples: &mut [Complex64], sigma: f64, rng: &mut R) {
    for z in samples.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *z += Complex64::new(re, im) * sigma;
    }
}

/// Simulated propagation of one frame: per-subcarrier channel, CFO rotation from the
/// first frame sample, then AWGN at `snr_db` per sample. Deterministic in `seed`.
pub fn apply_channel(frame: &Frame, h_freq: &[Complex64], cfo_hz: f64, snr_db: f64, seed: u64) -> Result<Vec<Complex64>> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::arg("snr_db must be finite or +inf"));
    }
    let mut out = filter_symbols(&frame.config, &frame.samples, h_freq)?;
    rotate(&mut out, cfo_hz, frame.config.sample_rate_hz, 0);
    let mut rng = crate::seed::rng(seed);
    add_awgn(&mut out, snr_db, &mut rng);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum_of_symbol(cfg: &OfdmConfig, samples: &[Complex64], start: usize) -> Vec<Complex64> {
        let mut g = samples[start + cfg.n_cp..start + cfg.symbol_len()].to_vec();
        cfg.transform().forward(&mut g);
        g
    }

    #[test]
    fn default_layout_counts() {
        let c = OfdmConfig::default();
        assert_eq!(c.n_used(), 924);
        assert_eq!(c.used_indices().len(), 924);
        assert_eq!(c.used_mask().iter().filter(|&&m| m).count(), 924);
        assert_eq!(*c.used_indices().first().unwrap(), -462);
        assert_eq!(*c.used_indices().last().unwrap(), 462);
        assert!(!c.used_indices().contains(&0));
        assert_eq!(c.frame_len(), 3840);
        assert!((c.subcarrier_spacing_hz() - 19_531.25).abs() < 1e-9);
        assert!((c.max_unambiguous_cfo_hz() - 7812.5).abs() < 1e-9);
    }

    #[test]
    fn config_block_round_trip() {
        let c = OfdmConfig {
            n_sub: 256,
            n_cp: 32,
            sample_rate_hz: 5e6,
            carrier_hz: 2.4e9,
            n_guard_low: 10,
            n_guard_high: 9,
            dc_null: false,
        };
        assert_eq!(OfdmConfig::from_block(&c.to_block()).unwrap(), c);
        assert!(c.to_block()[33..].iter().all(|&b| b == 0));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = OfdmConfig::default();
        c.n_cp = 1024;
        assert!(c.validate().is_err());
        let mut c = OfdmConfig::default();
        c.n_guard_low = 600;
        assert!(c.validate().is_err());
    }

    #[test]
    fn frame_spectral_mask_and_cp() {
        let c = OfdmConfig::default();
        let f = build_frame(&c, 3, &id_to_bits(77)).unwrap();
        assert_eq!(f.samples.len(), 3840);
        let mask = c.used_mask();
        for start in f.symbol_starts() {
            let spec = spectrum_of_symbol(&c, &f.samples, start);
            let zeros = spec.iter().filter(|z| z.norm() < 1e-12).count();
            assert_eq!(zeros, 100);
            for (b, z) in spec.iter().enumerate() {
                if mask[b] {
                    assert!((z.norm() - 1.0).abs() < 1e-9);
                } else {
                    assert!(z.norm() < 1e-12);
                }
            }
            // Cyclic prefix is the tail of the body.
            let l = c.symbol_len();
            for i in 0..c.n_cp {
                assert_eq!(f.samples[start + i], f.samples[start + l - c.n_cp + i]);
            }
        }
        // Pilots are identical including their prefixes.
        assert_eq!(f.samples[..1280], f.samples[1280..2560]);
    }

    #[test]
    fn pilots_are_deterministic_qpsk() {
        let c = OfdmConfig::default();
        let a = build_frame(&c, 11, &[]).unwrap();
        let b = build_frame(&c, 11, &[]).unwrap();
        let d = build_frame(&c, 12, &[]).unwrap();
        assert_eq!(a.pilot_freq, b.pilot_freq);
        assert_ne!(a.pilot_freq, d.pilot_freq);
        for p in &a.pilot_freq {
            assert!((p.norm() - 1.0).abs() < 1e-12);
            assert!((p.re.abs() - p.im.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn data_bits_too_long() {
        let c = OfdmConfig::default();
        assert!(build_frame(&c, 0, &vec![true; 925]).is_err());
        assert!(build_frame(&c, 0, &vec![true; 924]).is_ok());
    }

    #[test]
    fn id_bits_round_trip() {
        for id in [0u32, 1, 77, 0xdead_beef, u32::MAX] {
            assert_eq!(bits_to_id(&id_to_bits(id)), id);
        }
    }

    #[test]
    fn identity_channel_returns_input() {
        let c = OfdmConfig::default();
        let f = build_frame(&c, 5, &[]).unwrap();
        let out = apply_channel(&f, &vec![Complex64::new(1.0, 0.0); 924], 0.0, f64::INFINITY, 1).unwrap();
        let err = out
            .iter()
            .zip(&f.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "max err {err}");
    }

    #[test]
    fn awgn_hits_requested_snr() {
        // Empirical power ratio over >= 1e5 samples.
        let c = OfdmConfig::default();
        let f = build_frame(&c, 5, &[]).unwrap();
        let h = vec![Complex64::new(1.0, 0.0); 924];
        let clean = apply_channel(&f, &h, 0.0, f64::INFINITY, 0).unwrap();
        let (mut ps, mut pn) = (0.0, 0.0);
        for seed in 0..30 {
            let noisy = apply_channel(&f, &h, 0.0, 30.0, seed).unwrap();
            for (a, b) in noisy.iter().zip(&clean) {
                ps += b.norm_sqr();
                pn += (a - b).norm_sqr();
            }
        }
        let snr = 10.0 * (ps / pn).log10();
        assert!((snr - 30.0).abs() < 0.2, "snr {snr}");
    }

    #[test]
    fn one_bin_cfo_shifts_spectrum() {
        // A CFO of exactly one subcarrier spacing shifts each symbol's spectrum by
        // one bin, up to a constant phase per symbol.
        let c = OfdmConfig::default();
        let f = build_frame(&c, 9, &[]).unwrap();
        let df = c.subcarrier_spacing_hz();
        let rx = apply_channel(&f, &vec![Complex64::new(1.0, 0.0); 924], df, f64::INFINITY, 0).unwrap();
        let tx = spectrum_of_symbol(&c, &f.samples, 0);
        let ry = spectrum_of_symbol(&c, &rx, 0);
        let ref_bin = c.bin_of(5);
        let rot = ry[(ref_bin + 1) % c.n_sub] / tx[ref_bin];
        for b in 0..c.n_sub {
            let expect = tx[b] * rot;
            assert!((ry[(b + 1) % c.n_sub] - expect).norm() < 1e-9);
        }
    }
}
