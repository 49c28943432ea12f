//! Where the synthetic transmitter positions are placed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::synth::SceneConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LayoutKind {
    /// Regular grid over the scene extent.
    #[default]
    Grid,
    /// Hotspots stacked along radial spokes from the array.
    Spokes,
}

impl std::str::FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Self::Grid),
            "spokes" => Ok(Self::Spokes),
            _ => Err(Error::config(format!("unknown layout `{s}` (grid, spokes)"))),
        }
    }
}

impl std::fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Grid => "grid",
            Self::Spokes => "spokes",
        })
    }
}

/// Users gathered in discs centred on `count` spokes spread symmetrically
/// about the array boresight, one disc per spoke and range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpokeLayout {
    pub count: usize,
    pub spacing_deg: f64,
    pub ranges_m: Vec<f64>,
    pub radius_m: f64,
    pub users_per_hotspot: usize,
}

impl Default for SpokeLayout {
    fn default() -> Self {
        Self {
            count: 8,
            spacing_deg: 10.0,
            ranges_m: vec![100.0, 200.0, 320.0, 480.0, 700.0],
            radius_m: 10.0,
            users_per_hotspot: 125,
        }
    }
}

impl SpokeLayout {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.ranges_m.is_empty() || self.users_per_hotspot == 0 {
            return Err(Error::config("spoke layout needs spokes, ranges and users"));
        }
        if !self.spacing_deg.is_finite() || !(self.radius_m >= 0.0) || !self.radius_m.is_finite() {
            return Err(Error::config("spoke spacing and hotspot radius must be finite, radius ≥ 0"));
        }
        if self.ranges_m.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::config("spoke ranges must be positive"));
        }
        Ok(())
    }

    pub fn n_hotspots(&self) -> usize {
        self.count * self.ranges_m.len()
    }

    /// Hotspot centres, spoke-major.
    pub fn centers(&self, boresight_azimuth_deg: f64) -> Vec<(f64, f64)> {
        let mid = (self.count as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(self.n_hotspots());
        for s in 0..self.count {
            let az = (boresight_azimuth_deg + (s as f64 - mid) * self.spacing_deg).to_radians();
            for &r in &self.ranges_m {
                out.push((r * az.cos(), r * az.sin()));
            }
        }
        out
    }

    /// All user positions, hotspot by hotspot, drawn uniformly in each disc.
    pub fn positions(&self, scene: &SceneConfig, boresight_azimuth_deg: f64) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        let mut rng = crate::seed::substream(scene.seed, 2);
        let mut out = Vec::with_capacity(self.n_hotspots() * self.users_per_hotspot);
        for (cx, cy) in self.centers(boresight_azimuth_deg) {
            for _ in 0..self.users_per_hotspot {
                let r = self.radius_m * rng.random::<f64>().sqrt();
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                let p = (cx + r * phi.cos(), cy + r * phi.sin());
                if !scene.contains(p.0, p.1) {
                    return Err(Error::config(format!(
                        "hotspot user at ({:.1}, {:.1}) lies outside the scene extent",
                        p.0, p.1
                    )));
                }
                out.push(p);
            }
        }
        Ok(out)
    }
}
