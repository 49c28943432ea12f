use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Planar array in the vertical plane, facing `boresight_azimuth_deg`
/// (counter-clockwise from east), centred `height_m` above the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Element pitch in both directions; the default is half a wavelength.
    pub spacing_m: f64,
    pub boresight_azimuth_deg: f64,
    /// Half-power beamwidth of the element pattern.
    pub hpbw_deg: f64,
    pub height_m: f64,
    /// Power floor of the element pattern behind and beside the array.
    pub back_lobe_db: f64,
}

impl ArrayGeometry {
    /// 8×8 half-wavelength grid facing south-east from a 40 m roof.
    pub fn default_for(wavelength_m: f64) -> Self {
        Self {
            rows: 8,
            cols: 8,
            spacing_m: wavelength_m / 2.0,
            boresight_azimuth_deg: -45.0,
            hpbw_deg: 69.1,
            height_m: 40.0,
            back_lobe_db: -25.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_elements();
        if n == 0 || n > crate::dataset::MAX_ANTENNAS {
            return Err(Error::config(format!("array has {n} elements, expected 1..=64")));
        }
        if !(self.hpbw_deg > 0.0 && self.hpbw_deg < 180.0) {
            return Err(Error::config("hpbw_deg must lie in (0, 180)"));
        }
        if !(self.spacing_m > 0.0) || !self.spacing_m.is_finite() {
            return Err(Error::config("element spacing must be positive"));
        }
        if !self.boresight_azimuth_deg.is_finite() || !self.height_m.is_finite() || !self.back_lobe_db.is_finite() {
            return Err(Error::config("array parameters must be finite"));
        }
        if self.back_lobe_db > 0.0 {
            return Err(Error::config("back_lobe_db must not exceed 0 dB"));
        }
        Ok(())
    }

    pub fn n_elements(&self) -> usize {
        self.rows * self.cols
    }

    pub fn center(&self) -> [f64; 3] {
        [0.0, 0.0, self.height_m]
    }

    /// Unit vector along boresight (horizontal).
    pub fn boresight(&self) -> [f64; 3] {
        let az = self.boresight_azimuth_deg.to_radians();
        [az.cos(), az.sin(), 0.0]
    }

    /// Element offsets from the array centre, row-major from the bottom row;
    /// columns run to the left of boresight.
    pub fn element_positions(&self) -> Vec<[f64; 3]> {
        let az = self.boresight_azimuth_deg.to_radians();
        let u = [-az.sin(), az.cos(), 0.0];
        let cr = (self.rows as f64 - 1.0) / 2.0;
        let cc = (self.cols as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(self.n_elements());
        for r in 0..self.rows {
            for c in 0..self.cols {
                let h = (c as f64 - cc) * self.spacing_m;
                let v = (r as f64 - cr) * self.spacing_m;
                out.push([h * u[0], h * u[1], v]);
            }
        }
        out
    }

    /// Exponent `q` of the `cos^q θ` power pattern whose half-power angle is
    /// `hpbw / 2`.
    pub fn pattern_exponent(&self) -> f64 {
        0.5f64.ln() / (self.hpbw_deg / 2.0).to_radians().cos().ln()
    }

    /// Element power gain (linear, 1 on boresight) towards unit direction `dir`.
    pub fn element_power(&self, dir: [f64; 3]) -> f64 {
        let b = self.boresight();
        let c = dir[0] * b[0] + dir[1] * b[1] + dir[2] * b[2];
        let floor = crate::cmath::from_db10(self.back_lobe_db);
        let p = if c > 0.0 { c.powf(self.pattern_exponent()) } else { 0.0 };
        p.max(floor)
    }

    /// Per-element response to a plane wave arriving from unit direction `dir`
    /// (pointing from the array towards the source): the element nearer the
    /// source sees the wave first, i.e. phase `+k·(d_a·dir)`.
    pub fn steering(&self, dir: [f64; 3], wavelength_m: f64) -> Vec<Complex64> {
        let k = 2.0 * std::f64::consts::PI / wavelength_m;
        self.element_positions()
            .iter()
            .map(|d| Complex64::from_polar(1.0, k * (d[0] * dir[0] + d[1] * dir[1] + d[2] * dir[2])))
            .collect()
    }
}

/// Unit vector from azimuth (CCW from east) and elevation, radians.
pub fn direction(azimuth: f64, elevation: f64) -> [f64; 3] {
    [elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin()]
}

/// Azimuth and elevation of a (non-zero) vector, radians.
pub fn angles(v: [f64; 3]) -> (f64, f64) {
    let horiz = v[0].hypot(v[1]);
    (v[1].atan2(v[0]), v[2].atan2(horiz))
}
