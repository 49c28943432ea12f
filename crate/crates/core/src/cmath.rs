//! Small complex-vector kernels shared across modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// `Σ a_i · conj(b_i)`.
#[inline]
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.im * y.re - x.re * y.im;
    }
    Complex64::new(re, im)
}

#[inline]
pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

#[inline]
pub fn norm(a: &[Complex64]) -> f64 {
    norm_sqr(a).sqrt()
}

/// Unit phasor of `z`; zero maps to `1` (phase 0).
#[inline]
pub fn unit_phasor(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r > 0.0 && r.is_finite() {
        z / r
    } else {
        Complex64::new(1.0, 0.0)
    }
}

pub fn db10(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db10(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Wraps an angle to (-π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    use std::f64::consts::PI;
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Channel vectors packed as real rows `[re | im]` so that every
/// `|⟨h_g, c_k⟩|²` comes out of one real matrix product.
#[derive(Debug, Clone)]
pub struct PackedViews {
    n: usize,
    rows: DMatrix<f64>,
}

impl PackedViews {
    pub fn new(views: &[Vec<Complex64>]) -> Self {
        let n = views.first().map_or(0, Vec::len);
        let rows = DMatrix::from_fn(views.len(), 2 * n, |g, j| {
            if j < n {
                views[g][j].re
            } else {
                views[g][j - n].im
            }
        });
        Self { n, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    /// `M × K` matrix of `|⟨h_g, c_k⟩|²`.
    pub fn powers(&self, centers: &[Vec<Complex64>]) -> DMatrix<f64> {
        let n = self.n;
        let k = centers.len();
        // ⟨h, c⟩ = (a·x + b·y) + j(b·x − a·y) for h = a + jb, c = x + jy.
        let c = DMatrix::from_fn(2 * n, 2 * k, |j, col| {
            let z = centers[col % k][j % n];
            match (j < n, col < k) {
                (true, true) => z.re,
                (false, true) => z.im,
                (true, false) => -z.im,
                (false, false) => z.re,
            }
        });
        let prod = &self.rows * c;
        DMatrix::from_fn(self.len(), k, |g, j| {
            let re = prod[(g, j)];
            let im = prod[(g, j + k)];
            re * re + im * im
        })
    }
}
