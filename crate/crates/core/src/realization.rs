//! State-space realizations `F(z) = D + z C (I - z A)^{-1} B` and the joint
//! realization of the data pair `[G K]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::equations::{self, ProblemData};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Cx, EPS};

/// Sizes of the data: `G` is `m x p`, `K` is `m x q`, state order `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
}

impl fmt::Display for Dimensions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={} m={} p={} q={}", self.n, self.m, self.p, self.q)
    }
}

/// A validity failure of a structurally sound realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    Unstable { spectral_radius: f64 },
    Unobservable { rank: usize, order: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Unstable { spectral_radius } => {
                write!(f, "state matrix is not stable: spectral radius {spectral_radius} >= 1")
            }
            Violation::Unobservable { rank, order } => {
                write!(f, "pair (C, A) is not observable: observability rank {rank} < {order}")
            }
        }
    }
}

/// `F(z) = D + z C (I - z A)^{-1} B`, a `k x r` rational matrix function.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferFunction {
    pub d: CMat,
    pub c: CMat,
    pub a: CMat,
    pub b: CMat,
}

impl TransferFunction {
    pub fn new(d: CMat, c: CMat, a: CMat, b: CMat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("A is {}x{}, expected square", n, a.ncols())));
        }
        if c.ncols() != n || c.nrows() != d.nrows() {
            return Err(Error::Dimension(format!(
                "C is {}x{}, expected {}x{}",
                c.nrows(),
                c.ncols(),
                d.nrows(),
                n
            )));
        }
        if b.nrows() != n || b.ncols() != d.ncols() {
            return Err(Error::Dimension(format!(
                "B is {}x{}, expected {}x{}",
                b.nrows(),
                b.ncols(),
                n,
                d.ncols()
            )));
        }
        Ok(Self { d, c, a, b })
    }

    /// Constant function (state order zero).
    pub fn constant(d: CMat) -> Self {
        let (k, r) = d.shape();
        Self { d, c: linalg::zeros(k, 0), a: linalg::zeros(0, 0), b: linalg::zeros(0, r) }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn rows(&self) -> usize {
        self.d.nrows()
    }

    pub fn cols(&self) -> usize {
        self.d.ncols()
    }

    /// Evaluate at `z`; fails when `I - zA` is numerically singular.
    pub fn eval(&self, z: Cx) -> Result<CMat> {
        let n = self.order();
        if n == 0 {
            return Ok(self.d.clone());
        }
        let m = linalg::eye(n) - &self.a * z;
        match linalg::solve(&m, &self.b) {
            Some(x) if linalg::fnorm(&x) <= 1e14 * (1.0 + linalg::fnorm(&self.b)) => Ok(&self.d + (&self.c * x) * z),
            _ => Err(Error::Singular { z: format!("{z}"), condition: linalg::condition(&m) }),
        }
    }

    /// `F_0 = D`, `F_nu = C A^{nu-1} B`.
    pub fn taylor_coefficients(&self, count: usize) -> Vec<CMat> {
        let mut out = Vec::with_capacity(count);
        if count == 0 {
            return out;
        }
        out.push(self.d.clone());
        let mut ca = self.c.clone();
        for _ in 1..count {
            out.push(&ca * &self.b);
            ca = &ca * &self.a;
        }
        out
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        linalg::spectral_radius(&self.a)
    }

    /// Product `self * rhs` realized by series interconnection (state `[x_self; x_rhs]`).
    pub fn series(&self, rhs: &TransferFunction) -> Result<TransferFunction> {
        if self.cols() != rhs.rows() {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        let (n1, n2) = (self.order(), rhs.order());
        let mut a = linalg::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((0, n1), (n1, n2)).copy_from(&(&self.b * &rhs.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&rhs.a);
        let b = linalg::vstack(&[&self.b * &rhs.d, rhs.b.clone()], rhs.cols());
        let c = linalg::hstack(&[self.c.clone(), &self.d * &rhs.c], self.rows());
        TransferFunction::new(&self.d * &rhs.d, c, a, b)
    }
}

/// Joint realization `[G K] = [D1 D2] + z C (I - zA)^{-1} [B1 B2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub a: CMat,
    pub b1: CMat,
    pub b2: CMat,
    pub c: CMat,
    pub d1: CMat,
    pub d2: CMat,
}

impl Realization {
    /// Checks shapes only; see [`validate_realization`] for stability and observability.
    pub fn new(a: CMat, b1: CMat, b2: CMat, c: CMat, d1: CMat, d2: CMat) -> Result<Self> {
        let n = a.nrows();
        let m = d1.nrows();
        let p = d1.ncols();
        let q = d2.ncols();
        let check = |name: &str, mat: &CMat, rows: usize, cols: usize| {
            if mat.shape() != (rows, cols) {
                Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    mat.nrows(),
                    mat.ncols()
                )))
            } else {
                Ok(())
            }
        };
        check("A", &a, n, n)?;
        check("B1", &b1, n, p)?;
        check("B2", &b2, n, q)?;
        check("C", &c, m, n)?;
        check("D2", &d2, m, q)?;
        if m == 0 || p == 0 || q == 0 {
            return Err(Error::Dimension(format!("m, p, q must be positive (m={m}, p={p}, q={q})")));
        }
        Ok(Self { a, b1, b2, c, d1, d2 })
    }

    pub fn dims(&self) -> Dimensions {
        Dimensions { n: self.a.nrows(), m: self.d1.nrows(), p: self.d1.ncols(), q: self.d2.ncols() }
    }

    pub fn g(&self) -> TransferFunction {
        TransferFunction { d: self.d1.clone(), c: self.c.clone(), a: self.a.clone(), b: self.b1.clone() }
    }

    pub fn k(&self) -> TransferFunction {
        TransferFunction { d: self.d2.clone(), c: self.c.clone(), a: self.a.clone(), b: self.b2.clone() }
    }

    /// Rank of `[C; CA; ...; CA^{n-1}]` with tolerance `n * ||O|| * eps * 64`.
    pub fn observability_rank(&self) -> usize {
        let n = self.dims().n;
        if n == 0 {
            return 0;
        }
        let mut blocks = Vec::with_capacity(n);
        let mut ca = self.c.clone();
        for _ in 0..n {
            blocks.push(ca.clone());
            ca = &ca * &self.a;
        }
        let obs = linalg::vstack(&blocks, n);
        let s = linalg::singular_values(&obs);
        let tol = n as f64 * s.first().cloned().unwrap_or(0.0) * EPS * 64.0;
        s.iter().filter(|&&x| x > tol).count()
    }
}

/// Stability and observability violations; empty when the realization is valid.
pub fn validate_realization(r: &Realization) -> Result<Vec<Violation>> {
    let mut out = Vec::new();
    let n = r.dims().n;
    if n == 0 {
        return Ok(out);
    }
    let rho = linalg::spectral_radius(&r.a)?;
    if !(rho < 1.0) {
        out.push(Violation::Unstable { spectral_radius: rho });
    }
    let rank = r.observability_rank();
    if rank < n {
        out.push(Violation::Unobservable { rank, order: n });
    }
    Ok(out)
}

/// Evaluate `R(z) = zC(I - zA)^{-1} Gamma + R0 + Gamma* (zI - A*)^{-1} C*` on the unit circle.
pub fn eval_r(r: &Realization, pd: &ProblemData, z: Cx) -> Result<CMat> {
    let modulus = z.norm();
    if (modulus - 1.0).abs() > 1e-12 {
        return Err(Error::Domain { z: format!("{z}"), modulus });
    }
    let n = r.dims().n;
    if n == 0 {
        return Ok(pd.r0.clone());
    }
    let causal = TransferFunction { d: pd.r0.clone(), c: r.c.clone(), a: r.a.clone(), b: pd.gamma.clone() };
    let head = causal.eval(z)?;
    // Gamma* (zI - A*)^{-1} C*  =  [ C (conj(z) I - A)^{-1} Gamma ]*
    let m = linalg::eye(n) * z.conj() - &r.a;
    let x = linalg::solve(&m, &pd.gamma)
        .ok_or_else(|| Error::Singular { z: format!("{z}"), condition: linalg::condition(&m) })?;
    let tail = (&r.c * x).adjoint();
    Ok(head + tail)
}

/// Numerical McMillan degree: the number of eigenvalues of `Pc Po` above
/// `rel_tol * max eigenvalue`, where `Pc`, `Po` are the controllability and
/// observability Gramians.
pub fn mcmillan_degree_estimate(tf: &TransferFunction, rel_tol: f64) -> Result<usize> {
    if tf.order() == 0 {
        return Ok(0);
    }
    let pc = equations::solve_stein_symmetric(&tf.a, &tf.b)?;
    let po = equations::solve_stein_symmetric(&tf.a.adjoint(), &tf.c.adjoint())?;
    // Pc^{1/2} Po Pc^{1/2} is Hermitian and shares its spectrum with Pc Po.
    let s = linalg::hermitian_sqrt(&pc);
    let h = &s * po * &s;
    let ev = linalg::hermitian_eigenvalues(&h);
    let top = ev.last().cloned().unwrap_or(0.0);
    if !(top > 0.0) {
        return Ok(0);
    }
    Ok(ev.iter().filter(|&&x| x > rel_tol * top).count())
}
