//! Interference-limited SIR, cluster sum-rate and randomized k-means sweeps.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::clustering::{kmeans_packed, ClusterModel, KmeansOptions};
use crate::cmath::{from_db10, inner, PackedViews};
use crate::dataset::Dataset;
use crate::precoding::{MapPoint, PrecoderKind};
use crate::{Error, Result};

/// SIR ceiling standing in for noise: 30 dB.
pub const CLIP_DB: f64 = 30.0;

pub fn clip_linear(clip_db: f64) -> f64 {
    from_db10(clip_db)
}

/// `|⟨h, c_k⟩|² / Σ_{j≠k} |⟨h, c_j⟩|²`, clipped at `clip_db`. No interference
/// (including `K = 1`) yields the clip value.
pub fn sir_user(h: &[Complex64], centers: &[Vec<Complex64>], k: usize, clip_db: f64) -> Result<f64> {
    if k >= centers.len() {
        return Err(Error::arg(format!("cluster {k} out of range (K = {})", centers.len())));
    }
    if centers.iter().any(|c| c.len() != h.len()) {
        return Err(Error::arg("center and channel lengths differ"));
    }
    Ok(sir_unchecked(h, centers, k, clip_linear(clip_db)))
}

#[inline]
fn sir_unchecked(h: &[Complex64], centers: &[Vec<Complex64>], k: usize, clip: f64) -> f64 {
    let mut desired = 0.0;
    let mut interference = 0.0;
    for (j, c) in centers.iter().enumerate() {
        let p = inner(h, c).norm_sqr();
        if j == k {
            desired = p;
        } else {
            interference += p;
        }
    }
    if interference == 0.0 {
        return clip;
    }
    (desired / interference).min(clip)
}

/// Median; an even count averages the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// `Σ log2(1 + SIR_k)`.
pub fn sum_rate(cluster_sirs: &[f64]) -> f64 {
    cluster_sirs.iter().map(|s| (1.0 + s).log2()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SirReport {
    pub per_user: Vec<f64>,
    /// Median member SIR per cluster; `None` for empty clusters.
    pub per_cluster: Vec<Option<f64>>,
    pub sum_rate: f64,
    pub clip_db: f64,
}

impl SirReport {
    pub fn max_sir(&self) -> f64 {
        self.per_user
            .iter()
            .chain(self.per_cluster.iter().flatten())
            .fold(0.0, |a, &b| a.max(b))
    }
}

/// Per-user SIR against the model's transmit precoders (PO centers projected to
/// constant modulus), cluster medians and sum-rate. Empty clusters contribute
/// no rate.
pub fn sir_cluster(model: &ClusterModel, views: &[Vec<Complex64>]) -> Result<SirReport> {
    let w = transmit_weights(model)?;
    sir_cluster_with(&w, &model.assignments, views, CLIP_DB)
}

fn transmit_weights(model: &ClusterModel) -> Result<Vec<Vec<Complex64>>> {
    Ok(model.precoders()?.into_iter().map(|p| p.weights).collect())
}

/// Cluster SIR for arbitrary beams `centers` and labels.
pub fn sir_cluster_with(
    centers: &[Vec<Complex64>],
    labels: &[usize],
    views: &[Vec<Complex64>],
    clip_db: f64,
) -> Result<SirReport> {
    if labels.len() != views.len() {
        return Err(Error::arg("one label per view required"));
    }
    let k = centers.len();
    if labels.iter().any(|&l| l >= k) {
        return Err(Error::arg("label out of range"));
    }
    let n = centers.first().map_or(0, Vec::len);
    if centers.iter().chain(views).any(|v| v.len() != n) {
        return Err(Error::arg("center and channel lengths differ"));
    }
    Ok(report(&PackedViews::new(views), centers, labels, clip_db))
}

fn report(packed: &PackedViews, centers: &[Vec<Complex64>], labels: &[usize], clip_db: f64) -> SirReport {
    let clip = clip_linear(clip_db);
    let k = centers.len();
    let p = packed.powers(centers);
    let per_user: Vec<f64> = labels
        .iter()
        .enumerate()
        .map(|(g, &l)| {
            let desired = p[(g, l)];
            let interference: f64 = (0..k).filter(|&j| j != l).map(|j| p[(g, j)]).sum();
            if interference == 0.0 {
                clip
            } else {
                (desired / interference).min(clip)
            }
        })
        .collect();
    let mut members = vec![Vec::new(); k];
    for (&s, &l) in per_user.iter().zip(labels) {
        members[l].push(s);
    }
    let per_cluster: Vec<Option<f64>> = members.iter().map(|m| median(m)).collect();
    let rate = sum_rate(&per_cluster.iter().flatten().copied().collect::<Vec<_>>());
    SirReport {
        per_user,
        per_cluster,
        sum_rate: rate,
        clip_db,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub k_values: Vec<usize>,
    pub kinds: Vec<PrecoderKind>,
    pub realizations: usize,
    pub kmeans: KmeansOptions,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_values: vec![1, 2, 5, 10, 20, 40],
            kinds: vec![PrecoderKind::Mrt, PrecoderKind::Po],
            realizations: 1000,
            kmeans: KmeansOptions::default(),
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub kind: PrecoderKind,
    pub n_antennas: usize,
    pub mean_sum_rate: f64,
    /// Sample standard deviation; zero for a single realization.
    pub std_sum_rate: f64,
    pub realizations: usize,
    /// Largest per-user or per-cluster SIR seen in any realization.
    pub max_sir: f64,
    /// Sum-rate of every realization, in seed order.
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, k: usize, kind: PrecoderKind) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.k == k && r.kind == kind)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<csv>", e);
        writeln!(w, "k,kind,n_antennas,mean_sum_rate,std_sum_rate,realizations").map_err(io)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{:?},{:?},{}",
                r.k, r.kind, r.n_antennas, r.mean_sum_rate, r.std_sum_rate, r.realizations
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

/// For every `K`, runs `realizations` k-means per kind with seeds
/// `base_seed + r`; all kinds share each seed and hence each initial draw.
/// Results do not depend on the number of worker threads.
pub fn sweep(views: &[Vec<Complex64>], cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.realizations == 0 {
        return Err(Error::arg("at least one realization required"));
    }
    if cfg.kinds.is_empty() || cfg.k_values.is_empty() {
        return Err(Error::arg("sweep needs at least one K and one kind"));
    }
    let m = views.len();
    if let Some(&k) = cfg.k_values.iter().max() {
        if k > m {
            return Err(Error::arg(format!("k = {k} exceeds the {m} available records")));
        }
    }
    let n_antennas = views.first().map_or(0, Vec::len);
    if views.iter().any(|v| v.len() != n_antennas) {
        return Err(Error::arg("views have different lengths"));
    }
    let packed = PackedViews::new(views);
    let mut rows = Vec::new();
    for &k in &cfg.k_values {
        // Per realization: (sum-rate, max SIR) for each kind.
        let runs: Vec<Vec<(f64, f64)>> = (0..cfg.realizations)
            .into_par_iter()
            .map(|r| {
                let seed = cfg.base_seed.wrapping_add(r as u64);
                let mut init: Option<Vec<usize>> = None;
                cfg.kinds
                    .iter()
                    .map(|&kind| {
                        let model = kmeans_packed(views, &packed, k, kind, &cfg.kmeans, seed)?;
                        match &init {
                            None => init = Some(model.init_indices.clone()),
                            Some(i) if *i != model.init_indices => {
                                return Err(Error::arg("kinds drew different initial centers"))
                            }
                            Some(_) => {}
                        }
                        let rep = report(&packed, &transmit_weights(&model)?, &model.assignments, CLIP_DB);
                        Ok((rep.sum_rate, rep.max_sir()))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (j, &kind) in cfg.kinds.iter().enumerate() {
            let samples: Vec<f64> = runs.iter().map(|r| r[j].0).collect();
            let (mean, std) = mean_std(&samples);
            rows.push(SweepRow {
                k,
                kind,
                n_antennas,
                mean_sum_rate: mean,
                std_sum_rate: std,
                realizations: cfg.realizations,
                max_sir: runs.iter().map(|r| r[j].1).fold(0.0, f64::max),
                samples,
            });
        }
    }
    Ok(SweepResult { rows })
}

/// Mean and sample standard deviation, summed in order.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided `P(X ≥ wins)` for `X ~ Binomial(wins + losses, ½)`.
    pub p_value: f64,
}

/// Paired one-sided sign test of `a > b`; ties are dropped.
pub fn sign_test(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() {
        return Err(Error::arg("paired samples must have equal length"));
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let ties = a.len() - wins - losses;
    let n = (wins + losses) as u64;
    let p_value = if n == 0 {
        1.0
    } else if wins == 0 {
        1.0
    } else {
        let bin = Binomial::new(0.5, n).map_err(|e| Error::arg(e.to_string()))?;
        bin.sf(wins as u64 - 1)
    };
    Ok(SignTest {
        wins,
        losses,
        ties,
        p_value,
    })
}

/// Per-record mean SNR across antennas (dB domain).
pub fn mean_snr_map(dataset: &Dataset) -> Vec<MapPoint> {
    dataset
        .records
        .iter()
        .map(|r| MapPoint {
            x: r.tag.x,
            y: r.tag.y,
            value_db: r.mean_snr_db(),
        })
        .collect()
}
