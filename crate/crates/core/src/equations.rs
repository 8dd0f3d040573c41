//! Stein equations, the derived problem data `P1, P2, R0, Gamma`, and the
//! stabilizing solution of the Riccati equation
//!
//! ```text
//! Q = A* Q A + (C - Gamma* Q A)* (R0 - Gamma* Q Gamma)^{-1} (C - Gamma* Q A).
//! ```
//!
//! The Riccati solver starts from the finite-section estimate
//! `Q_N = W_N* T_{R,N}^{-1} W_N` (observability section against the section of
//! the Toeplitz operator of `R`) and then applies Newton's method, where every
//! Newton step is one Stein solve in the current closed-loop matrix.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Cx, EPS};
use crate::realization::{eval_r, Realization};

/// Solve `X - E X F = S` for `X` (`E` is `n x n`, `F` is `k x k`, `S` is `n x k`).
///
/// Both coefficient matrices are reduced to complex Schur form, after which the
/// transformed equation is solved column by column with triangular
/// back-substitution.
pub fn solve_stein_general(e: &CMat, f: &CMat, s: &CMat) -> Result<CMat> {
    let (n, k) = (e.nrows(), f.nrows());
    if e.ncols() != n || f.ncols() != k || s.shape() != (n, k) {
        return Err(Error::Dimension(format!(
            "Stein equation with E {}x{}, F {}x{}, S {}x{}",
            e.nrows(),
            e.ncols(),
            f.nrows(),
            f.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    if n == 0 || k == 0 {
        return Ok(s.clone());
    }
    let (u, t) = linalg::schur(e)?;
    let (v, w) = linalg::schur(f)?;
    let rhs = u.adjoint() * s * &v;
    let mut y = linalg::zeros(n, k);
    let mut acc = vec![Cx::new(0.0, 0.0); n];
    for j in 0..k {
        // acc = sum_{l<j} Y[:, l] W[l, j]
        acc.iter_mut().for_each(|a| *a = Cx::new(0.0, 0.0));
        for l in 0..j {
            let wlj = w[(l, j)];
            if wlj != Cx::new(0.0, 0.0) {
                for i in 0..n {
                    acc[i] += y[(i, l)] * wlj;
                }
            }
        }
        // b = rhs[:, j] + T acc
        let mut b = vec![Cx::new(0.0, 0.0); n];
        for i in 0..n {
            let mut sum = rhs[(i, j)];
            for l in i..n {
                sum += t[(i, l)] * acc[l];
            }
            b[i] = sum;
        }
        // (I - w_jj T) y_j = b, upper triangular
        let wjj = w[(j, j)];
        for i in (0..n).rev() {
            let prod = wjj * t[(i, i)];
            let diag = Cx::new(1.0, 0.0) - prod;
            if diag.norm() <= 64.0 * EPS * (1.0 + prod.norm()) {
                return Err(Error::Resonance { product: format!("{prod}") });
            }
            let mut sum = b[i];
            for l in (i + 1)..n {
                sum += wjj * t[(i, l)] * y[(l, j)];
            }
            y[(i, j)] = sum / diag;
        }
    }
    Ok(&u * y * v.adjoint())
}

/// Unique Hermitian solution of `P - A P A* = B B*` for stable `A`.
pub fn solve_stein_symmetric(a: &CMat, b: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::Dimension(format!("A is {n}x{n} but B has {} rows", b.nrows())));
    }
    if n == 0 {
        return Ok(linalg::zeros(0, 0));
    }
    let rho = linalg::spectral_radius(a)?;
    if !(rho < 1.0) {
        return Err(Error::NoUniqueSolution { spectral_radius: rho });
    }
    let p = solve_stein_general(a, &a.adjoint(), &(b * b.adjoint()))?;
    Ok(linalg::hermitian_part(&p))
}

/// `P1, P2` (Stein solutions for `B1`, `B2`) and the coefficients `R0`, `Gamma`
/// of the realization of `R = G G^* - K K^*`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemData {
    pub p1: CMat,
    pub p2: CMat,
    pub r0: CMat,
    pub gamma: CMat,
}

impl ProblemData {
    /// `N = P2 - P1`.
    pub fn n_diff(&self) -> CMat {
        &self.p2 - &self.p1
    }

    /// Frobenius residuals of the two Stein equations.
    pub fn stein_residuals(&self, r: &Realization) -> (f64, f64) {
        let res = |p: &CMat, b: &CMat| linalg::fnorm(&(p - &r.a * p * r.a.adjoint() - b * b.adjoint()));
        (res(&self.p1, &r.b1), res(&self.p2, &r.b2))
    }
}

pub fn compute_problem_data(r: &Realization) -> Result<ProblemData> {
    let p1 = solve_stein_symmetric(&r.a, &r.b1)?;
    let p2 = solve_stein_symmetric(&r.a, &r.b2)?;
    let dp = &p1 - &p2;
    let r0 = linalg::hermitian_part(
        &(&r.d1 * r.d1.adjoint() - &r.d2 * r.d2.adjoint() + &r.c * &dp * r.c.adjoint()),
    );
    let gamma = &r.b1 * r.d1.adjoint() - &r.b2 * r.d2.adjoint() + &r.a * &dp * r.c.adjoint();
    Ok(ProblemData { p1, p2, r0, gamma })
}

/// Which of the strict-positivity conditions failed first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// `T_R` is not strictly positive, so no stabilizing solution exists.
    ToeplitzNotPositive,
    /// `Delta = R0 - Gamma* Q Gamma` is not strictly positive.
    DeltaNotPositive,
    /// `A0 = A - Gamma C0` is not stable.
    ClosedLoopUnstable,
    /// `Q` is not strictly positive.
    QNotPositive,
    /// `Q^{-1} + P2 - P1` is not strictly positive.
    CouplingNotPositive,
}

impl Condition {
    pub fn describe(&self) -> &'static str {
        match self {
            Condition::ToeplitzNotPositive => "T_R is not strictly positive (no stabilizing Riccati solution)",
            Condition::DeltaNotPositive => "Delta = R0 - Gamma* Q Gamma is not strictly positive",
            Condition::ClosedLoopUnstable => "A0 = A - Gamma C0 is not stable",
            Condition::QNotPositive => "Q is not strictly positive",
            Condition::CouplingNotPositive => "Q^{-1} + P2 - P1 is not strictly positive",
        }
    }
}

/// Diagnosis returned when the data do not satisfy the strict positivity test.
/// `value` is the offending eigenvalue (or spectral radius for
/// [`Condition::ClosedLoopUnstable`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotStrictlyPositive {
    pub condition: Condition,
    pub value: f64,
}

impl fmt::Display for NotStrictlyPositive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = if self.condition == Condition::ClosedLoopUnstable { "spectral radius" } else { "eigenvalue" };
        write!(f, "not strictly positive: {} ({what} {:e})", self.condition.describe(), self.value)
    }
}

#[derive(Clone, Debug)]
pub struct DareOptions {
    /// Fixed initial section count; `None` uses `max(64, 8 ceil(1/(1 - rho(A))))`.
    pub sections: Option<usize>,
    /// Upper bound on `N * m` for the section estimate.
    pub max_section_rows: usize,
    /// Doubling stops once successive estimates differ by less than this (relative).
    pub section_tol: f64,
    pub newton_max_iter: usize,
    /// Circle points used to screen `R(e^{iw})` for a non-positive value.
    pub circle_points: usize,
    /// Strict positivity margin: min eigenvalue must exceed `pd_rel * (1 + ||M||)`.
    pub pd_rel: f64,
    /// Accepted Riccati and Stein residual, relative to `1 + ||Q||`.
    pub residual_rel: f64,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            sections: None,
            max_section_rows: 2048,
            section_tol: 1e-9,
            newton_max_iter: 60,
            circle_points: 256,
            pd_rel: 1e-10,
            residual_rel: 1e-10,
        }
    }
}

impl DareOptions {
    pub fn scaled(mut self, factor: f64) -> Self {
        self.pd_rel *= factor;
        self.residual_rel *= factor;
        self
    }

    fn pd_margin(&self, m: &CMat) -> f64 {
        self.pd_rel * (1.0 + linalg::fnorm(m))
    }
}

/// Evidence that both strict-positivity conditions hold.
#[derive(Clone, Debug)]
pub struct RiccatiCertificate {
    pub q: CMat,
    pub delta: CMat,
    pub c0: CMat,
    pub a0: CMat,
    pub rho_a0: f64,
    pub min_eig_delta: f64,
    pub min_eig_q: f64,
    pub riccati_residual: f64,
    pub stein_residual: f64,
    /// Min eigenvalue of `Q^{-1} + P2 - P1`.
    pub min_eig_cond_ii: f64,
    /// Min eigenvalue of the congruent form `I + L* (P2 - P1) L`, `Q = L L*`.
    pub min_eig_cond_ii_congruent: f64,
    pub sections_used: usize,
    pub sections_converged: bool,
    pub newton_iterations: usize,
    /// Smallest eigenvalue of `R` seen on the screening grid.
    pub circle_min_eig: f64,
}

/// `(Delta, C0, A0)` for the given `Q`; `None` if `Delta` is singular.
pub fn closed_loop(r: &Realization, pd: &ProblemData, q: &CMat) -> Option<(CMat, CMat, CMat)> {
    let delta = linalg::hermitian_part(&(&pd.r0 - pd.gamma.adjoint() * q * &pd.gamma));
    let rhs = &r.c - pd.gamma.adjoint() * q * &r.a;
    let c0 = linalg::solve(&delta, &rhs)?;
    let a0 = &r.a - &pd.gamma * &c0;
    Some((delta, c0, a0))
}

/// Frobenius norm of `Q - A*QA - (C - Gamma*QA)* Delta^{-1} (C - Gamma*QA)`.
pub fn riccati_residual(r: &Realization, pd: &ProblemData, q: &CMat) -> f64 {
    if r.dims().n == 0 {
        return 0.0;
    }
    match closed_loop(r, pd, q) {
        Some((_, c0, _)) => {
            let lhs = &r.c - pd.gamma.adjoint() * q * &r.a;
            linalg::fnorm(&(q - r.a.adjoint() * q * &r.a - lhs.adjoint() * c0))
        }
        None => f64::INFINITY,
    }
}

/// Frobenius norm of `Q - A* Q A0 - C* C0`.
pub fn stein_residual(r: &Realization, q: &CMat, c0: &CMat, a0: &CMat) -> f64 {
    linalg::fnorm(&(q - r.a.adjoint() * q * a0 - r.c.adjoint() * c0))
}

fn section_count(r: &Realization, opts: &DareOptions) -> Result<usize> {
    let m = r.dims().m;
    let cap = (opts.max_section_rows / m).max(1);
    let n0 = match opts.sections {
        Some(n) => n.max(1),
        None => {
            let rho = linalg::spectral_radius(&r.a)?;
            let k = (1.0 / (1.0 - rho)).ceil();
            let k = if k.is_finite() { (8.0 * k) as usize } else { cap };
            k.max(64)
        }
    };
    Ok(n0.min(cap))
}

/// `T_{R,N}` assembled from `R_0 = R0`, `R_nu = C A^{nu-1} Gamma`, `R_{-nu} = R_nu*`.
fn toeplitz_r_section(r: &Realization, pd: &ProblemData, sections: usize) -> (CMat, CMat) {
    let m = r.dims().m;
    let n = r.dims().n;
    let mut coeffs = Vec::with_capacity(sections);
    let mut w_blocks = Vec::with_capacity(sections);
    coeffs.push(pd.r0.clone());
    let mut ca = r.c.clone();
    for nu in 0..sections {
        w_blocks.push(ca.clone());
        if nu + 1 < sections {
            coeffs.push(&ca * &pd.gamma);
        }
        ca = &ca * &r.a;
    }
    let mut t = linalg::zeros(sections * m, sections * m);
    for i in 0..sections {
        for j in 0..sections {
            let blk = if i >= j { coeffs[i - j].clone() } else { coeffs[j - i].adjoint() };
            t.view_mut((i * m, j * m), (m, m)).copy_from(&blk);
        }
    }
    (t, linalg::vstack(&w_blocks, n))
}

/// Section estimate `W_N* T_{R,N}^{-1} W_N`. `Err(min_eig)` when the section
/// is not positive definite.
fn section_estimate(r: &Realization, pd: &ProblemData, sections: usize) -> std::result::Result<CMat, f64> {
    let (t, w) = toeplitz_r_section(r, pd, sections);
    match linalg::hpd_solve(&t, &w) {
        Some(x) => Ok(linalg::hermitian_part(&(w.adjoint() * x))),
        None => Err(linalg::min_eig(&t)),
    }
}

/// Newton iteration on the Riccati equation from `q_start`. Each step solves
/// `Q' - A0* Q' A0 = C* C0 + C0* C - C0* R0 C0` with `(C0, A0)` from the
/// current iterate. Returns the refined `Q` and the number of steps taken.
pub fn refine_newton(r: &Realization, pd: &ProblemData, q_start: &CMat, opts: &DareOptions) -> Result<(CMat, usize)> {
    if r.dims().n == 0 {
        return Ok((linalg::zeros(0, 0), 0));
    }
    let mut q = linalg::hermitian_part(q_start);
    let mut residual = riccati_residual(r, pd, &q);
    let mut stalls = 0;
    for it in 1..=opts.newton_max_iter {
        let (_, c0, a0) = closed_loop(r, pd, &q)
            .ok_or_else(|| Error::Convergence("Delta became singular during Newton iteration".into()))?;
        let rhs = r.c.adjoint() * &c0 + c0.adjoint() * &r.c - c0.adjoint() * &pd.r0 * &c0;
        let next = solve_stein_general(&a0.adjoint(), &a0, &rhs).map_err(|e| match e {
            Error::Resonance { product } => {
                Error::Convergence(format!("closed-loop matrix reached the unit circle (eigenvalue product {product})"))
            }
            other => other,
        })?;
        let next = linalg::hermitian_part(&next);
        if !linalg::is_finite(&next) {
            return Err(Error::Convergence("Newton iterate is not finite".into()));
        }
        let step = linalg::fnorm(&(&next - &q));
        let next_residual = riccati_residual(r, pd, &next);
        let scale = 1.0 + linalg::fnorm(&next);
        q = next;
        if step <= 1e-14 * scale {
            return Ok((q, it));
        }
        if next_residual >= residual && next_residual <= opts.residual_rel * scale {
            // rounding floor reached
            stalls += 1;
            if stalls >= 2 {
                return Ok((q, it));
            }
        }
        residual = next_residual;
    }
    if residual <= opts.residual_rel * (1.0 + linalg::fnorm(&q)) {
        Ok((q, opts.newton_max_iter))
    } else {
        Err(Error::Convergence(format!(
            "Newton iteration stopped after {} steps with residual {residual:e}",
            opts.newton_max_iter
        )))
    }
}

fn not_positive(condition: Condition, value: f64) -> Error {
    Error::NotStrictlyPositive(NotStrictlyPositive { condition, value })
}

/// Decide strict positivity and, on success, return the stabilizing solution
/// with its certificate. Conditions are checked in the order: `T_R`, `Delta`,
/// Riccati residual, `rho(A0)`, `Q`, `Q^{-1} + P2 - P1`.
pub fn solve_dare_stabilizing(r: &Realization, pd: &ProblemData, opts: &DareOptions) -> Result<RiccatiCertificate> {
    let dims = r.dims();
    let n = dims.n;

    // Screen R on the circle: T_R > 0 forces R(e^{iw}) > 0 for every w.
    let mut circle_min = f64::INFINITY;
    for omega in linalg::uniform_grid(opts.circle_points.max(1)) {
        let rz = eval_r(r, pd, linalg::circle(omega))?;
        circle_min = circle_min.min(linalg::min_eig(&rz));
    }
    if circle_min <= opts.pd_margin(&pd.r0) {
        return Err(not_positive(Condition::ToeplitzNotPositive, circle_min));
    }

    let (q, sections_used, sections_converged, newton_iterations) = if n == 0 {
        (linalg::zeros(0, 0), 0, true, 0)
    } else {
        let cap = (opts.max_section_rows / dims.m).max(1);
        let mut sections = section_count(r, opts)?;
        let mut estimate = section_estimate(r, pd, sections).map_err(|e| not_positive(Condition::ToeplitzNotPositive, e))?;
        let mut converged = false;
        while sections * 2 <= cap {
            let next = section_estimate(r, pd, sections * 2)
                .map_err(|e| not_positive(Condition::ToeplitzNotPositive, e))?;
            let moved = linalg::fnorm(&(&next - &estimate));
            sections *= 2;
            let done = moved <= opts.section_tol * (1.0 + linalg::fnorm(&next));
            estimate = next;
            if done {
                converged = true;
                break;
            }
        }
        let (q, iters) = refine_newton(r, pd, &estimate, opts)?;
        (q, sections, converged, iters)
    };

    let (delta, c0, a0) = if n == 0 {
        (pd.r0.clone(), linalg::zeros(dims.m, 0), linalg::zeros(0, 0))
    } else {
        closed_loop(r, pd, &q).ok_or_else(|| not_positive(Condition::DeltaNotPositive, 0.0))?
    };

    let min_eig_delta = linalg::min_eig(&delta);
    if min_eig_delta <= opts.pd_margin(&delta) {
        return Err(not_positive(Condition::DeltaNotPositive, min_eig_delta));
    }

    let qnorm = 1.0 + linalg::fnorm(&q);
    let riccati = riccati_residual(r, pd, &q);
    if riccati > opts.residual_rel * qnorm {
        return Err(Error::Convergence(format!("Riccati residual {riccati:e} exceeds tolerance")));
    }

    let rho_a0 = linalg::spectral_radius(&a0)?;
    if !(rho_a0 < 1.0) {
        return Err(not_positive(Condition::ClosedLoopUnstable, rho_a0));
    }

    // Q = W* T_R^{-1} W is positive semidefinite once T_R is, and strictly
    // positive for an observable pair; weakly observable modes leave
    // eigenvalues at rounding level. Only a clearly negative eigenvalue is
    // reported as a violation.
    let min_eig_q = linalg::min_eig(&q);
    if n > 0 && !(min_eig_q > -opts.pd_margin(&q)) {
        return Err(not_positive(Condition::QNotPositive, min_eig_q));
    }

    // Condition (ii) is decided on the congruent form I + L*(P2 - P1)L with
    // L = Q^{1/2}, which avoids forming Q^{-1}.
    let (min_eig_cond_ii, min_eig_cond_ii_congruent) = if n == 0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let l = linalg::hermitian_sqrt(&q);
        let congruent_mat = linalg::eye(n) + &l * pd.n_diff() * &l;
        let congruent = linalg::min_eig(&congruent_mat);
        if congruent <= opts.pd_margin(&congruent_mat) {
            return Err(not_positive(Condition::CouplingNotPositive, congruent));
        }
        // direct form, with eigenvalues of Q floored at eps ||Q||
        let floor = linalg::EPS * linalg::norm2(&q);
        let q_inv = linalg::hermitian_fn(&q, |x| 1.0 / x.max(floor));
        let direct = linalg::min_eig(&(q_inv + pd.n_diff()));
        (direct, congruent)
    };

    Ok(RiccatiCertificate {
        stein_residual: stein_residual(r, &q, &c0, &a0),
        q,
        delta,
        c0,
        a0,
        rho_a0,
        min_eig_delta,
        min_eig_q,
        riccati_residual: riccati,
        min_eig_cond_ii,
        min_eig_cond_ii_congruent,
        sections_used,
        sections_converged,
        newton_iterations,
        circle_min_eig: circle_min,
    })
}
