//! k-means user grouping with MRT or phase-only cluster centers.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmath::{norm, unit_phasor, PackedViews};
use crate::dataset::{CsiRecord, Dataset, GpsTag};
use crate::ofdm::OfdmConfig;
use crate::precoding::{Precoder, PrecoderKind};
use crate::{Error, Result};

/// How the antenna × subcarrier matrix is collapsed to one vector per record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SubcarrierPolicy {
    /// The used subcarrier nearest DC (the positive one on a tie).
    CenterBin,
    /// Per-antenna mean after removing antenna 0's phase on every bin.
    MeanCoherent,
    /// Dominant left singular vector scaled by `σ₁/√n_used`.
    #[default]
    PrincipalDirection,
}

impl std::str::FromStr for SubcarrierPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center_bin" | "center-bin" => Ok(Self::CenterBin),
            "mean_coherent" | "mean-coherent" => Ok(Self::MeanCoherent),
            "principal_direction" | "principal-direction" | "principal" => Ok(Self::PrincipalDirection),
            _ => Err(Error::arg(format!(
                "unknown subcarrier policy `{s}` (center_bin, mean_coherent, principal_direction)"
            ))),
        }
    }
}

/// Narrowband channel vector of `record`. The global phase is fixed so that the
/// first non-zero entry is real and positive.
pub fn reduce_subcarriers(record: &CsiRecord, config: &OfdmConfig, policy: SubcarrierPolicy) -> Vec<Complex64> {
    let h = &record.h;
    let n_ant = h.n_antennas();
    let n_sub = h.n_subcarriers();
    let mut v = match policy {
        SubcarrierPolicy::CenterBin => {
            let idx = config.used_indices();
            let f = (0..n_sub.min(idx.len()))
                .min_by_key(|&i| (idx[i].abs(), idx[i] < 0))
                .unwrap_or(0);
            h.column(f)
        }
        SubcarrierPolicy::MeanCoherent => {
            let rot: Vec<Complex64> = h.row_f64(0).into_iter().map(|z| unit_phasor(z).conj()).collect();
            (0..n_ant)
                .map(|a| {
                    h.row(a)
                        .iter()
                        .zip(&rot)
                        .map(|(z, r)| Complex64::new(z.re as f64, z.im as f64) * r)
                        .sum::<Complex64>()
                        / n_sub as f64
                })
                .collect()
        }
        SubcarrierPolicy::PrincipalDirection => principal_direction(record),
    };
    canonical_phase(&mut v);
    v
}

fn principal_direction(record: &CsiRecord) -> Vec<Complex64> {
    let h = &record.h;
    let n_ant = h.n_antennas();
    let n_sub = h.n_subcarriers();
    // G = H·Hᴴ from real products: with X = [A B] and Y = [B −A] for H = A + jB,
    // Re G = X·Xᵀ and Im G = −X·Yᵀ.
    let x = DMatrix::from_fn(n_ant, 2 * n_sub, |a, j| {
        let z = h.as_slice()[a * n_sub + j % n_sub];
        if j < n_sub {
            z.re as f64
        } else {
            z.im as f64
        }
    });
    let y = DMatrix::from_fn(n_ant, 2 * n_sub, |a, j| {
        let z = h.as_slice()[a * n_sub + j % n_sub];
        if j < n_sub {
            z.im as f64
        } else {
            -z.re as f64
        }
    });
    let re = &x * x.transpose();
    let im = &x * y.transpose();
    let g = DMatrix::from_fn(n_ant, n_ant, |i, j| Complex64::new(re[(i, j)], -im[(i, j)]));
    let eig = g.symmetric_eigen();
    let (k, lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best });
    let scale = (lambda.max(0.0) / n_sub as f64).sqrt();
    eig.eigenvectors.column(k).iter().map(|z| z * scale).collect()
}

fn canonical_phase(v: &mut [Complex64]) {
    if let Some(z) = v.iter().find(|z| z.norm_sqr() > 0.0) {
        let r = unit_phasor(*z).conj();
        v.iter_mut().for_each(|x| *x *= r);
    }
}

/// Views of every record under one policy, computed in parallel.
pub fn views(dataset: &Dataset, policy: SubcarrierPolicy) -> Vec<Vec<Complex64>> {
    dataset
        .records
        .par_iter()
        .map(|r| reduce_subcarriers(r, &dataset.config, policy))
        .collect()
}

/// Views of a record stream, reduced in parallel a chunk at a time so that only
/// one chunk of channel matrices is alive. `antennas` selects rows first.
pub fn views_streamed<I>(
    records: I,
    config: &OfdmConfig,
    policy: SubcarrierPolicy,
    antennas: Option<&[usize]>,
) -> Result<Vec<Vec<Complex64>>>
where
    I: Iterator<Item = Result<CsiRecord>>,
{
    const CHUNK: usize = 256;
    let mut out = Vec::new();
    let mut chunk = Vec::with_capacity(CHUNK);
    let mut records = records.peekable();
    while records.peek().is_some() {
        chunk.clear();
        for r in records.by_ref().take(CHUNK) {
            let mut r = r?;
            if let Some(idx) = antennas {
                if let Some(&bad) = idx.iter().find(|&&i| i >= r.h.n_antennas()) {
                    return Err(Error::arg(format!("antenna index {bad} out of range")));
                }
                r.h = r.h.select_rows(idx);
                r.snr_db = idx.iter().map(|&i| r.snr_db[i]).collect();
            }
            chunk.push(r);
        }
        out.par_extend(chunk.par_iter().map(|r| reduce_subcarriers(r, config, policy)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub kind: PrecoderKind,
    /// For PO these are the literal means of unit phasors (see [`update_centers`]).
    pub centers: Vec<Vec<Complex64>>,
    pub assignments: Vec<usize>,
    pub iterations_run: usize,
    pub seed: u64,
    /// Record indices that seeded the centers.
    pub init_indices: Vec<usize>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Transmit precoders: MRT centers as they are, PO centers projected back to
    /// constant modulus.
    pub fn precoders(&self) -> Result<Vec<Precoder>> {
        self.centers.iter().map(|c| Precoder::from_center(c, self.kind)).collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut n = vec![0; self.k()];
        for &l in &self.assignments {
            n[l] += 1;
        }
        n
    }

    /// Plain-text export: header lines then one center per line as
    /// space-separated `re,im` pairs.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<model>", e);
        writeln!(w, "k {}", self.k()).map_err(io)?;
        writeln!(w, "kind {}", self.kind).map_err(io)?;
        writeln!(w, "seed {}", self.seed).map_err(io)?;
        writeln!(w, "iterations {}", self.iterations_run).map_err(io)?;
        writeln!(w, "n_antennas {}", self.centers.first().map_or(0, Vec::len)).map_err(io)?;
        for c in &self.centers {
            let line: Vec<String> = c.iter().map(|z| format!("{:?},{:?}", z.re, z.im)).collect();
            writeln!(w, "{}", line.join(" ")).map_err(io)?;
        }
        Ok(())
    }

    /// `index,x,y,label` per record, positions taken from `tags`.
    pub fn write_assignments_csv<W: Write>(&self, mut w: W, tags: &[GpsTag]) -> Result<()> {
        let io = |e| Error::io("<csv>", e);
        if tags.len() != self.assignments.len() {
            return Err(Error::arg("one tag per assigned record required"));
        }
        writeln!(w, "index,x,y,label").map_err(io)?;
        for (i, (t, l)) in tags.iter().zip(&self.assignments).enumerate() {
            writeln!(w, "{i},{},{},{l}", t.x, t.y).map_err(io)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmeansOptions {
    pub iterations: usize,
    /// Stop once an assignment round changes no label.
    pub early_exit: bool,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        Self {
            iterations: 30,
            early_exit: false,
        }
    }
}

/// `k` distinct record indices drawn uniformly from `0..m`. Depends only on
/// `(m, k, seed)`, so MRT and PO runs with one seed start from the same records.
pub fn init_indices(m: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    if k > m {
        return Err(Error::arg(format!("k = {k} exceeds the {m} available records")));
    }
    let mut rng = crate::seed::rng(seed);
    Ok(rand::seq::index::sample(&mut rng, m, k).into_vec())
}

fn seed_center(h: &[Complex64], kind: PrecoderKind) -> Vec<Complex64> {
    match kind {
        PrecoderKind::Mrt => {
            let n = norm(h);
            if n > 0.0 {
                h.iter().map(|z| z / n).collect()
            } else {
                h.to_vec()
            }
        }
        PrecoderKind::Po => h.iter().map(|&z| unit_phasor(z)).collect(),
    }
}

pub fn init_centers(
    views: &[Vec<Complex64>],
    k: usize,
    kind: PrecoderKind,
    seed: u64,
) -> Result<(Vec<Vec<Complex64>>, Vec<usize>)> {
    let idx = init_indices(views.len(), k, seed)?;
    Ok((idx.iter().map(|&i| seed_center(&views[i], kind)).collect(), idx))
}

/// `argmax_k |⟨h(g), c_k⟩|` per record; ties go to the smallest index.
pub fn assign(views: &[Vec<Complex64>], centers: &[Vec<Complex64>]) -> Vec<usize> {
    assign_scored(&PackedViews::new(views), centers).into_iter().map(|(k, _)| k).collect()
}

/// Best center and its squared response for every record.
fn assign_scored(packed: &PackedViews, centers: &[Vec<Complex64>]) -> Vec<(usize, f64)> {
    let p = packed.powers(centers);
    (0..packed.len())
        .map(|g| {
            let mut best = (0, f64::NEG_INFINITY);
            for k in 0..centers.len() {
                let s = p[(g, k)];
                if s > best.1 {
                    best = (k, s);
                }
            }
            best
        })
        .collect()
}

/// MRT: normalized member sum. PO: mean of member unit phasors, kept as is.
/// Empty clusters keep `previous` when given; [`kmeans`] re-seeds them instead.
pub fn update_centers(
    views: &[Vec<Complex64>],
    labels: &[usize],
    k: usize,
    kind: PrecoderKind,
) -> Vec<Option<Vec<Complex64>>> {
    let n = views.first().map_or(0, Vec::len);
    let mut sums = vec![vec![Complex64::new(0.0, 0.0); n]; k];
    let mut counts = vec![0usize; k];
    for (h, &l) in views.iter().zip(labels) {
        counts[l] += 1;
        let s = &mut sums[l];
        match kind {
            PrecoderKind::Mrt => s.iter_mut().zip(h).for_each(|(a, z)| *a += z),
            PrecoderKind::Po => s.iter_mut().zip(h).for_each(|(a, &z)| *a += unit_phasor(z)),
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| {
            if c == 0 {
                return None;
            }
            match kind {
                PrecoderKind::Mrt => {
                    let nn = norm(&s);
                    (nn > 0.0).then(|| s.iter().map(|z| z / nn).collect())
                }
                PrecoderKind::Po => Some(s.iter().map(|z| z / c as f64).collect()),
            }
        })
        .collect()
}

pub fn kmeans(
    views: &[Vec<Complex64>],
    k: usize,
    kind: PrecoderKind,
    opts: &KmeansOptions,
    seed: u64,
) -> Result<ClusterModel> {
    let n = views.first().map_or(0, Vec::len);
    if views.iter().any(|v| v.len() != n) {
        return Err(Error::arg("views have different lengths"));
    }
    kmeans_packed(views, &PackedViews::new(views), k, kind, opts, seed)
}

/// [`kmeans`] on views already packed (and length-checked) by the caller.
pub(crate) fn kmeans_packed(
    views: &[Vec<Complex64>],
    packed: &PackedViews,
    k: usize,
    kind: PrecoderKind,
    opts: &KmeansOptions,
    seed: u64,
) -> Result<ClusterModel> {
    let (mut centers, init) = init_centers(views, k, kind, seed)?;
    let mut labels: Vec<usize> = Vec::new();
    let mut run = 0;
    for _ in 0..opts.iterations {
        let scored = assign_scored(packed, &centers);
        let new_labels: Vec<usize> = scored.iter().map(|s| s.0).collect();
        run += 1;
        let unchanged = new_labels == labels;
        labels = new_labels;
        let updated = update_centers(views, &labels, k, kind);
        // Empty (or degenerate) clusters take the worst-served records, worst first.
        let mut order: Vec<usize> = Vec::new();
        let mut next = 0;
        for (j, u) in updated.into_iter().enumerate() {
            match u {
                Some(c) => centers[j] = c,
                None => {
                    if order.is_empty() {
                        order = (0..views.len()).collect();
                        order.sort_by(|&a, &b| scored[a].1.total_cmp(&scored[b].1).then(a.cmp(&b)));
                    }
                    if let Some(&g) = order.get(next) {
                        centers[j] = seed_center(&views[g], kind);
                        next += 1;
                    }
                }
            }
        }
        if opts.early_exit && unchanged && next == 0 {
            break;
        }
    }
    let assignments = assign_scored(packed, &centers).into_iter().map(|(k, _)| k).collect();
    Ok(ClusterModel {
        kind,
        centers,
        assignments,
        iterations_run: run,
        seed,
        init_indices: init,
    })
}
