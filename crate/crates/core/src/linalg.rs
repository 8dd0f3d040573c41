//! Dense complex linear algebra kernels shared by the solver modules.
//!
//! Everything operates on `DMatrix<Complex64>`. Zero-sized matrices are
//! legal inputs to every function here; the state dimension may be zero.

use nalgebra::{Cholesky, DMatrix, Dyn, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Cx = Complex64;
pub type CMat = DMatrix<Cx>;

pub const EPS: f64 = f64::EPSILON;

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Embed a real row-major array as a complex matrix.
pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> CMat {
    assert_eq!(data.len(), rows * cols);
    CMat::from_fn(rows, cols, |i, j| Cx::new(data[i * cols + j], 0.0))
}

pub fn scalar(x: f64) -> CMat {
    CMat::from_element(1, 1, Cx::new(x, 0.0))
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Frobenius norm; zero for empty matrices.
pub fn fnorm(m: &CMat) -> f64 {
    m.norm()
}

/// Largest singular value.
pub fn norm2(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Complex Schur form `m = U T U*` with `T` upper triangular.
pub fn schur(m: &CMat) -> Result<(CMat, CMat)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((zeros(0, 0), zeros(0, 0)));
    }
    let s = Schur::<Cx, Dyn>::try_new(m.clone(), EPS, 10_000 * n.max(1))
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    Ok(s.unpack())
}

pub fn eigenvalues(m: &CMat) -> Result<Vec<Cx>> {
    let (_, t) = schur(m)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Maximum eigenvalue modulus.
pub fn spectral_radius(m: &CMat) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "spectral radius of a non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Eigenvalues of the Hermitian part of `h`, ascending.
pub fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    if h.is_empty() {
        return Vec::new();
    }
    let mut v: Vec<f64> = hermitian_part(h).symmetric_eigen().eigenvalues.iter().cloned().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Smallest eigenvalue of the Hermitian part; `+inf` for an empty matrix.
pub fn min_eig(h: &CMat) -> f64 {
    hermitian_eigenvalues(h).first().cloned().unwrap_or(f64::INFINITY)
}

/// Principal square root of a Hermitian positive semidefinite matrix.
/// Negative rounding-level eigenvalues are clamped to zero.
pub fn hermitian_sqrt(h: &CMat) -> CMat {
    hermitian_fn(h, |x| x.max(0.0).sqrt())
}

pub fn hermitian_fn(h: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let n = h.nrows();
    if n == 0 {
        return zeros(0, 0);
    }
    let e = hermitian_part(h).symmetric_eigen();
    let mut scaled = e.eigenvectors.clone();
    for j in 0..n {
        let fj = Cx::new(f(e.eigenvalues[j]), 0.0);
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    &scaled * e.eigenvectors.adjoint()
}

/// Solve `h x = b` for Hermitian positive definite `h`; `None` if the
/// Cholesky factorization breaks down.
pub fn hpd_solve(h: &CMat, b: &CMat) -> Option<CMat> {
    if h.nrows() == 0 {
        return Some(zeros(0, b.ncols()));
    }
    Some(cholesky(h)?.solve(b))
}

/// Cholesky factorization of the Hermitian part. The complex square root in
/// the factorization never fails, so an indefinite input shows up as a
/// non-positive real part on the diagonal of `L`; that case returns `None`.
pub fn cholesky(h: &CMat) -> Option<Cholesky<Cx, Dyn>> {
    let chol = Cholesky::new(hermitian_part(h))?;
    let l = chol.l_dirty();
    let ok = (0..h.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-8 * d.re
    });
    ok.then_some(chol)
}

/// General square solve via partial-pivot LU.
pub fn solve(a: &CMat, b: &CMat) -> Option<CMat> {
    if a.nrows() == 0 {
        return Some(zeros(0, b.ncols()));
    }
    let x = a.clone().lu().solve(b)?;
    is_finite(&x).then_some(x)
}

/// Right division `b a^{-1}`.
pub fn solve_right(b: &CMat, a: &CMat) -> Option<CMat> {
    solve(&a.adjoint(), &b.adjoint()).map(|x| x.adjoint())
}

/// 2-norm condition number estimate from singular values.
pub fn condition(a: &CMat) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Stack matrices with equal column counts on top of each other.
pub fn vstack(blocks: &[CMat], cols: usize) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Place matrices with equal row counts side by side.
pub fn hstack(blocks: &[CMat], rows: usize) -> CMat {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

pub fn block(m: &CMat, r0: usize, c0: usize, rows: usize, cols: usize) -> CMat {
    m.view((r0, c0), (rows, cols)).into_owned()
}

pub fn log_det_hpd(h: &CMat) -> Option<f64> {
    if h.nrows() == 0 {
        return Some(0.0);
    }
    let chol = cholesky(h)?;
    let l = chol.l();
    Some((0..h.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Unit-circle point `e^{i omega}`.
pub fn circle(omega: f64) -> Cx {
    Cx::from_polar(1.0, omega)
}

/// Uniform grid `2 pi k / points` on `[0, 2 pi)`.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / points as f64)
        .collect()
}
