//! Narrowband transmit weights and their spatial response.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clustering::{reduce_subcarriers, SubcarrierPolicy};
use crate::cmath::{db10, inner, norm, unit_phasor};
use crate::dataset::Dataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PrecoderKind {
    /// Maximum ratio transmission.
    Mrt,
    /// Phase-only (constant modulus).
    Po,
}

impl fmt::Display for PrecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecoderKind::Mrt => "MRT",
            PrecoderKind::Po => "PO",
        })
    }
}

impl FromStr for PrecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mrt" => Ok(PrecoderKind::Mrt),
            "po" | "phase-only" => Ok(PrecoderKind::Po),
            _ => Err(Error::arg(format!("unknown precoder kind `{s}` (expected mrt or po)"))),
        }
    }
}

/// Unit-power transmit weights. MRT weights have unit Euclidean norm; PO
/// weights have every entry at modulus `1/√N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub weights: Vec<Complex64>,
    pub kind: PrecoderKind,
}

impl Precoder {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Basis vector `e_i` of length `n` (a single active element).
    pub fn basis(n: usize, i: usize) -> Self {
        let mut weights = vec![Complex64::new(0.0, 0.0); n];
        weights[i] = Complex64::new(1.0, 0.0);
        Self {
            weights,
            kind: PrecoderKind::Mrt,
        }
    }

    /// Turns a cluster center into a transmit precoder of the given kind.
    pub fn from_center(center: &[Complex64], kind: PrecoderKind) -> Result<Self> {
        match kind {
            PrecoderKind::Mrt => mrt_weights(center),
            PrecoderKind::Po => Ok(po_weights(center)),
        }
    }
}

/// `|⟨h, c⟩| = |Σ h_i · conj(c_i)|`.
pub fn similarity(h: &[Complex64], c: &Precoder) -> Result<f64> {
    if h.len() != c.len() {
        return Err(Error::arg(format!(
            "channel has {} entries, precoder {}",
            h.len(),
            c.len()
        )));
    }
    Ok(inner(h, &c.weights).norm())
}

pub fn mrt_weights(h: &[Complex64]) -> Result<Precoder> {
    let n = norm(h);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::arg("MRT weights need a non-zero finite channel"));
    }
    Ok(Precoder {
        weights: h.iter().map(|z| z / n).collect(),
        kind: PrecoderKind::Mrt,
    })
}

/// `exp(j·arg h_i)/√N`; zero entries get phase 0.
pub fn po_weights(h: &[Complex64]) -> Precoder {
    let s = 1.0 / (h.len().max(1) as f64).sqrt();
    Precoder {
        weights: h.iter().map(|&z| unit_phasor(z) * s).collect(),
        kind: PrecoderKind::Po,
    }
}

/// How a record's channel is collapsed before evaluating a beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MapPolicy {
    /// Beam power averaged over all used subcarriers.
    #[default]
    AveragePower,
    /// Beam power of the record's narrowband view.
    View(SubcarrierPolicy),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapPoint {
    pub x: f64,
    pub y: f64,
    pub value_db: f64,
}

/// Received beam power `10·log10 |⟨h̄(g), c⟩|²` at every record position.
pub fn beam_power_map(dataset: &Dataset, c: &Precoder, policy: MapPolicy) -> Result<Vec<MapPoint>> {
    if dataset.is_empty() {
        return Err(Error::arg("dataset has no records"));
    }
    if c.len() != dataset.n_antennas() {
        return Err(Error::arg(format!(
            "precoder has {} weights, dataset {} antennas",
            c.len(),
            dataset.n_antennas()
        )));
    }
    dataset
        .records
        .iter()
        .map(|r| {
            let p = match policy {
                MapPolicy::AveragePower => {
                    let n_sub = r.h.n_subcarriers();
                    let mut acc = vec![Complex64::new(0.0, 0.0); n_sub];
                    for (a, w) in c.weights.iter().enumerate() {
                        let wc = w.conj();
                        for (s, z) in acc.iter_mut().zip(r.h.row(a)) {
                            *s += Complex64::new(z.re as f64, z.im as f64) * wc;
                        }
                    }
                    acc.iter().map(|z| z.norm_sqr()).sum::<f64>() / n_sub as f64
                }
                MapPolicy::View(p) => {
                    let v = reduce_subcarriers(r, &dataset.config, p);
                    inner(&v, &c.weights).norm_sqr()
                }
            };
            Ok(MapPoint {
                x: r.tag.x,
                y: r.tag.y,
                value_db: db10(p),
            })
        })
        .collect()
}

pub fn write_map_csv<W: std::io::Write>(mut w: W, points: &[MapPoint], column: &str) -> Result<()> {
    let io = |e| Error::io("<csv>", e);
    writeln!(w, "x,y,{column}").map_err(io)?;
    for p in points {
        writeln!(w, "{},{},{}", p.x, p.y, p.value_db).map_err(io)?;
    }
    Ok(())
}
