use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::{angles, direction, ArrayGeometry};
use super::link::{link_budget_snr, path_loss_db, LinkBudget};
use crate::cmath::{db10, from_db10};
use crate::dataset::{CsiMatrix, CsiRecord, Dataset, GpsTag, Origin};
use crate::ofdm::{OfdmConfig, DEFAULT_TAPS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Scattered paths per position, in addition to the line of sight.
    pub n_paths: usize,
    pub delay_spread_max_s: f64,
    pub path_loss_exponent: f64,
    /// Line-of-sight to scattered power ratio; `inf` for pure line of sight.
    pub rician_k_db: f64,
    /// Gaussian spread of scattered directions around the line of sight.
    pub azimuth_spread_deg: f64,
    pub elevation_spread_deg: f64,
    pub user_height_m: f64,
    /// Adds delay-confined estimation noise at the unit noise floor.
    pub csi_noise: bool,
    /// Horizontal GPS standard deviations are log-normal with this median...
    pub gps_std_median_m: f64,
    /// ...and this log-domain spread.
    pub gps_std_log_sigma: f64,
    pub gps_up_median_m: f64,
    pub link: LinkBudget,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            x_min: -300.0,
            x_max: 300.0,
            y_min: -400.0,
            y_max: 400.0,
            n_paths: 8,
            delay_spread_max_s: 3e-6,
            path_loss_exponent: 3.0,
            rician_k_db: 6.0,
            azimuth_spread_deg: 15.0,
            elevation_spread_deg: 5.0,
            user_height_m: 1.5,
            csi_noise: true,
            gps_std_median_m: 0.12,
            gps_std_log_sigma: 0.6,
            gps_up_median_m: 0.25,
            link: LinkBudget::default(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self, config: &OfdmConfig) -> Result<()> {
        let finite = [
            self.x_min,
            self.x_max,
            self.y_min,
            self.y_max,
            self.delay_spread_max_s,
            self.path_loss_exponent,
            self.azimuth_spread_deg,
            self.elevation_spread_deg,
            self.user_height_m,
            self.gps_std_median_m,
            self.gps_std_log_sigma,
            self.gps_up_median_m,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("scene parameters must be finite"));
        }
        if self.x_min > self.x_max || self.y_min > self.y_max {
            return Err(Error::config("scene extent is empty"));
        }
        if self.rician_k_db.is_nan() || self.rician_k_db == f64::NEG_INFINITY {
            return Err(Error::config("rician_k_db must be a number or inf"));
        }
        let window = DEFAULT_TAPS as f64 * config.sample_period_s();
        if !(self.delay_spread_max_s >= 0.0 && self.delay_spread_max_s < window) {
            return Err(Error::config(format!(
                "delay_spread_max_s must lie in [0, {window:e}) to stay inside the tap window"
            )));
        }
        if self.azimuth_spread_deg < 0.0 || self.elevation_spread_deg < 0.0 {
            return Err(Error::config("angular spreads must be non-negative"));
        }
        if self.gps_std_median_m <= 0.0 || self.gps_up_median_m <= 0.0 || self.gps_std_log_sigma < 0.0 {
            return Err(Error::config("GPS accuracy parameters must be positive"));
        }
        self.link.validate()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    fn los_fraction(&self) -> f64 {
        if self.n_paths == 0 || self.rician_k_db == f64::INFINITY {
            1.0
        } else {
            let k = from_db10(self.rician_k_db);
            k / (k + 1.0)
        }
    }
}

struct Path {
    gain: Complex64,
    dir: [f64; 3],
    delay_s: f64,
}

/// Channel seen by `geometry` from a transmitter at `position`; the tag is
/// carried through unchanged. Entries are scaled so that the noise floor is
/// 0 dB, i.e. `|h|²` is the linear per-subcarrier SNR.
pub fn synth_record(
    position: &GpsTag,
    geometry: &ArrayGeometry,
    scene: &SceneConfig,
    config: &OfdmConfig,
    seed: u64,
) -> Result<CsiRecord> {
    if !scene.contains(position.x, position.y) {
        return Err(Error::arg(format!(
            "position ({}, {}) lies outside the scene extent",
            position.x, position.y
        )));
    }
    let pos = [position.x, position.y, position.z];
    let c = geometry.center();
    let v = [pos[0] - c[0], pos[1] - c[1], pos[2] - c[2]];
    let dist = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let los = if dist > 0.0 {
        [v[0] / dist, v[1] / dist, v[2] / dist]
    } else {
        geometry.boresight()
    };
    let lambda = config.wavelength_m();
    let snr_db = link_budget_snr(
        &scene
            .link
            .with_path_loss(path_loss_db(dist, scene.path_loss_exponent, lambda)),
    );
    let power = from_db10(snr_db);

    let mut rng = crate::seed::rng(seed);
    let los_frac = scene.los_fraction();
    let mut paths = Vec::with_capacity(scene.n_paths + 1);
    let phi0 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    paths.push(Path {
        gain: Complex64::from_polar((power * los_frac).sqrt(), phi0),
        dir: los,
        delay_s: 0.0,
    });
    if los_frac < 1.0 {
        let (az, el) = angles(los);
        let amp = (power * (1.0 - los_frac) / scene.n_paths as f64 / 2.0).sqrt();
        let az_d = Normal::new(az, scene.azimuth_spread_deg.to_radians()).map_err(|e| Error::config(e.to_string()))?;
        let el_d = Normal::new(el, scene.elevation_spread_deg.to_radians()).map_err(|e| Error::config(e.to_string()))?;
        for _ in 0..scene.n_paths {
            let dir = direction(az_d.sample(&mut rng), el_d.sample(&mut rng));
            let delay_s = rng.random::<f64>() * scene.delay_spread_max_s;
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            paths.push(Path {
                gain: Complex64::new(re, im) * amp,
                dir,
                delay_s,
            });
        }
    }

    let n_ant = geometry.n_elements();
    let freqs = config.used_frequencies_hz();
    let n_used = freqs.len();
    let mut h = vec![Complex64::new(0.0, 0.0); n_ant * n_used];
    for p in &paths {
        let g = p.gain * geometry.element_power(p.dir).sqrt();
        let a: Vec<Complex64> = geometry.steering(p.dir, lambda).iter().map(|s| s * g).collect();
        let b: Vec<Complex64> = freqs
            .iter()
            .map(|f| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * p.delay_s))
            .collect();
        for (row, ai) in h.chunks_exact_mut(n_used).zip(&a) {
            for (z, bf) in row.iter_mut().zip(&b) {
                *z += ai * bf;
            }
        }
    }
    if scene.csi_noise {
        add_confined_noise(&mut h, n_used, config, &mut rng);
    }

    let snr: Vec<f32> = h
        .chunks_exact(n_used)
        .map(|row| db10(row.iter().map(|z| z.norm_sqr()).sum::<f64>() / n_used as f64) as f32)
        .collect();
    let data = h.iter().map(|z| crate::Complex32::new(z.re as f32, z.im as f32)).collect();
    Ok(CsiRecord {
        tag: *position,
        h: CsiMatrix::new(n_ant, n_used, data)?,
        snr_db: snr,
    })
}

/// Estimation noise as it survives the two-pilot average and the tap-window
/// projection: white taps inside the window, per-bin variance
/// `½ · n_taps / n_used` at the unit floor.
fn add_confined_noise<R: Rng + ?Sized>(h: &mut [Complex64], n_used: usize, config: &OfdmConfig, rng: &mut R) {
    let tf = config.transform();
    let bins = config.used_bins();
    let n = config.n_sub;
    let sigma = (n as f64 / (2.0 * n_used as f64) / 2.0).sqrt();
    let mut grid = vec![Complex64::new(0.0, 0.0); n];
    for row in h.chunks_exact_mut(n_used) {
        grid.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for z in grid.iter_mut().take(DEFAULT_TAPS.min(n)) {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *z = Complex64::new(re, im) * sigma;
        }
        tf.forward(&mut grid);
        for (z, &b) in row.iter_mut().zip(&bins) {
            *z += grid[b];
        }
    }
}

/// Grid points `(x, y)` covering the scene extent, x-major.
pub fn grid_positions(scene: &SceneConfig, grid_step_m: f64) -> Result<Vec<(f64, f64)>> {
    if !(grid_step_m > 0.0) || !grid_step_m.is_finite() {
        return Err(Error::arg("grid step must be positive"));
    }
    let count = |lo: f64, hi: f64| ((hi - lo) / grid_step_m + 1e-9).floor() as usize + 1;
    let nx = count(scene.x_min, scene.x_max);
    let ny = count(scene.y_min, scene.y_max);
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            out.push((
                scene.x_min + i as f64 * grid_step_m,
                scene.y_min + j as f64 * grid_step_m,
            ));
        }
    }
    if out.is_empty() {
        return Err(Error::arg("empty grid"));
    }
    Ok(out)
}

/// Record `index` of a layout: the channel is evaluated at the true point, the
/// tag carries a GPS fix jittered by its own reported accuracy.
pub(crate) fn point_record(
    index: usize,
    point: (f64, f64),
    geometry: &ArrayGeometry,
    scene: &SceneConfig,
    config: &OfdmConfig,
) -> Result<CsiRecord> {
    let seed = crate::seed::derive(scene.seed, index as u64);
    let truth = GpsTag::at(point.0, point.1, scene.user_height_m);
    let mut rec = synth_record(&truth, geometry, scene, config, seed)?;
    let mut rng = crate::seed::substream(seed, 1);
    let horiz = LogNormal::new(scene.gps_std_median_m.ln(), scene.gps_std_log_sigma)
        .map_err(|e| Error::config(e.to_string()))?;
    let up = LogNormal::new(scene.gps_up_median_m.ln(), scene.gps_std_log_sigma)
        .map_err(|e| Error::config(e.to_string()))?;
    let std_north = horiz.sample(&mut rng);
    let std_east = horiz.sample(&mut rng);
    let std_up = up.sample(&mut rng);
    let n: [f64; 3] = [
        StandardNormal.sample(&mut rng),
        StandardNormal.sample(&mut rng),
        StandardNormal.sample(&mut rng),
    ];
    rec.tag = GpsTag {
        x: point.0 + n[0] * std_east,
        y: point.1 + n[1] * std_north,
        z: scene.user_height_m + n[2] * std_up,
        std_north,
        std_east,
        std_up,
        timestamp: index as f64 * 0.1,
    };
    Ok(rec)
}

/// One record per point, generated in parallel, in point order.
pub fn synth_dataset(
    scene: &SceneConfig,
    geometry: &ArrayGeometry,
    config: &OfdmConfig,
    points: &[(f64, f64)],
) -> Result<Dataset> {
    let records = synth_map(scene, geometry, config, points, Ok)?;
    Ok(Dataset {
        config: config.clone(),
        records,
        origin: Origin::Synthetic,
        seed: Some(scene.seed),
    })
}

/// Generates the record of every point and immediately maps it through `f`, so
/// that large scenes can be reduced without holding all channel matrices.
pub fn synth_map<T, F>(
    scene: &SceneConfig,
    geometry: &ArrayGeometry,
    config: &OfdmConfig,
    points: &[(f64, f64)],
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(CsiRecord) -> Result<T> + Sync,
{
    config.validate()?;
    geometry.validate()?;
    scene.validate(config)?;
    points
        .par_iter()
        .enumerate()
        .map(|(i, &p)| point_record(i, p, geometry, scene, config).and_then(&f))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn los_scene() -> SceneConfig {
        SceneConfig {
            n_paths: 0,
            rician_k_db: f64::INFINITY,
            csi_noise: false,
            x_min: -3000.0,
            x_max: 3000.0,
            y_min: -3000.0,
            y_max: 3000.0,
            ..Default::default()
        }
    }

    #[test]
    fn grid_count() {
        let pts = grid_positions(&SceneConfig::default(), 10.0).unwrap();
        assert_eq!(pts.len(), 61 * 81);
        assert_eq!(pts[0], (-300.0, -400.0));
        assert_eq!(*pts.last().unwrap(), (300.0, 400.0));
        assert!(grid_positions(&SceneConfig::default(), 0.0).is_err());
    }

    #[test]
    fn outside_extent_rejected() {
        let c = OfdmConfig::default();
        let g = ArrayGeometry::default_for(c.wavelength_m());
        let s = SceneConfig::default();
        assert!(synth_record(&GpsTag::at(500.0, 0.0, 1.5), &g, &s, &c, 0).is_err());
    }

    #[test]
    fn pure_los_matches_steering_vector() {
        let c = OfdmConfig::default();
        let g = ArrayGeometry::default_for(c.wavelength_m());
        let s = los_scene();
        let b = g.boresight();
        let p = GpsTag::at(300.0 * b[0], 300.0 * b[1] + 17.0, 40.0);
        let r = synth_record(&p, &g, &s, &c, 4).unwrap();
        let v = [p.x, p.y, 0.0];
        let d = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let st = g.steering([v[0] / d, v[1] / d, 0.0], c.wavelength_m());
        let h0 = r.h.get(0, 0);
        for a in 0..64 {
            let mag = r.h.get(a, 0).norm();
            for f in 0..924 {
                assert!((r.h.get(a, f).norm() - mag).abs() < 1e-4 * mag);
            }
            let ratio = r.h.get(a, 5) / h0;
            let expect = st[a] / st[0];
            assert!((ratio / ratio.norm() - expect).norm() < 1e-6);
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let c = OfdmConfig::default();
        let g = ArrayGeometry::default_for(c.wavelength_m());
        let s = SceneConfig::default();
        let p = GpsTag::at(100.0, -100.0, 1.5);
        assert_eq!(synth_record(&p, &g, &s, &c, 1).unwrap(), synth_record(&p, &g, &s, &c, 1).unwrap());
        assert_ne!(synth_record(&p, &g, &s, &c, 1).unwrap(), synth_record(&p, &g, &s, &c, 2).unwrap());
    }
}
