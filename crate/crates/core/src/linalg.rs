//! Small dense complex linear-algebra helpers on top of `ndarray`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = Array2<Complex64>;
pub type CVector = Array1<Complex64>;

/// Conjugate transpose.
pub fn herm(m: ArrayView2<'_, Complex64>) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

/// `a^H b` for column vectors.
pub fn inner(a: ArrayView1<'_, Complex64>, b: ArrayView1<'_, Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(v: ArrayView1<'_, Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn fro_norm_sqr(m: ArrayView2<'_, Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `diag(A^H F)` without forming the full product.
pub fn diag_herm_product(a: ArrayView2<'_, Complex64>, f: ArrayView2<'_, Complex64>) -> CVector {
    a.axis_iter(Axis(1))
        .zip(f.axis_iter(Axis(1)))
        .map(|(ac, fc)| inner(ac, fc))
        .collect()
}

/// Largest eigenvalue of a Hermitian positive semidefinite matrix by power
/// iteration. Returns 0 for the zero matrix. The estimate is a lower bound.
pub fn max_eigenvalue_psd(q: ArrayView2<'_, Complex64>, max_iters: usize, rel_tol: f64) -> f64 {
    let n = q.nrows();
    if n == 0 {
        return 0.0;
    }
    // Deterministic start vector with no special alignment to the grid.
    let mut v: CVector = (0..n)
        .map(|k| Complex64::from_polar(1.0, 0.7 * k as f64 + 0.3 * (k * k) as f64))
        .collect();
    let mut v_norm = norm_sqr(v.view()).sqrt();
    v.mapv_inplace(|z| z / v_norm);
    let mut est = 0.0;
    for _ in 0..max_iters {
        let w = q.dot(&v);
        let next = inner(v.view(), w.view()).re;
        v_norm = norm_sqr(w.view()).sqrt();
        if v_norm == 0.0 {
            return 0.0;
        }
        v = w.mapv(|z| z / v_norm);
        if (next - est).abs() <= rel_tol * next.abs().max(f64::MIN_POSITIVE) {
            est = next;
            break;
        }
        est = next;
    }
    // Rayleigh quotients approach from below; callers add their own margin.
    est.max(0.0)
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn hermitian_pd_inverse(m: ArrayView2<'_, Complex64>) -> Result<CMatrix> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{:?} is not square",
            m.dim()
        )));
    }
    let dm = DMatrix::from_fn(n, n, |r, c| m[[r, c]]);
    let chol = dm
        .cholesky()
        .ok_or_else(|| Error::invalid("matrix", "not positive definite"))?;
    let inv = chol.inverse();
    Ok(CMatrix::from_shape_fn((n, n), |(r, c)| inv[(r, c)]))
}

/// Circularly-symmetric complex Gaussian with total variance `variance`
/// (`variance / 2` per real dimension).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    variance: f64,
) -> CMatrix {
    // Explicit row-major loop keeps the draw order stable across ndarray versions.
    let mut m = CMatrix::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            m[[r, c]] = complex_gaussian(rng, variance);
        }
    }
    m
}
