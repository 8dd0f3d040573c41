//! Closed-form state space realizations of the maximum entropy solution `X`
//! and of the factors `U`, `V`, `V^{-1}`, `Theta`.

use crate::equations::{ProblemData, RiccatiCertificate};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::realization::{Realization, TransferFunction};

#[derive(Clone, Debug)]
pub struct SolutionBundle {
    /// `(P1 - P2)(I + Q (P2 - P1))^{-1}`.
    pub omega: CMat,
    /// `(P1 - P2)(Q^{-1} + P2 - P1)^{-1} Q^{-1}`; `None` when `Q` is singular.
    pub omega_alt: Option<CMat>,
    /// `I + (P2 - P1) Q`.
    pub omega0: CMat,
    pub c1: CMat,
    pub c2: CMat,
    pub d0: CMat,
    pub b0: CMat,
    /// `B2 - Gamma D0 + A Omega C2*`, an algebraically equal form of `b0`.
    pub b0_alt: CMat,
    pub d_u: CMat,
    pub d_v: CMat,
    pub a_cross: CMat,
    pub rho_a_cross: f64,
    pub x: TransferFunction,
    pub u: TransferFunction,
    pub v: TransferFunction,
    pub v_inv: TransferFunction,
    pub theta: TransferFunction,
    /// `-ln det D_V`.
    pub entropy: f64,
}

fn inconsistent(what: &str) -> Error {
    Error::Inconsistent(what.to_string())
}

pub fn synthesize(r: &Realization, pd: &ProblemData, cert: &RiccatiCertificate) -> Result<SolutionBundle> {
    let n = r.dims().n;
    let q_mat = &cert.q;
    let n_diff = pd.n_diff();
    let p_diff = -&n_diff;

    let omega = linalg::solve_right(&p_diff, &(linalg::eye(n) + q_mat * &n_diff))
        .ok_or_else(|| inconsistent("I + Q (P2 - P1) is singular"))?;
    let omega_alt = linalg::hpd_solve(q_mat, &linalg::eye(n)).and_then(|q_inv| {
        let coupling = &q_inv + &n_diff;
        linalg::hpd_solve(&coupling, &q_inv).map(|y| &p_diff * y)
    });
    let omega0 = linalg::eye(n) + &n_diff * q_mat;

    let c1 = r.d1.adjoint() * &cert.c0 + r.b1.adjoint() * q_mat * &cert.a0;
    let c2 = r.d2.adjoint() * &cert.c0 + r.b2.adjoint() * q_mat * &cert.a0;

    let gain = linalg::hpd_solve(&cert.delta, &(&r.d2 - pd.gamma.adjoint() * q_mat * &r.b2))
        .ok_or_else(|| inconsistent("Delta is not positive definite"))?;
    let d0 = &gain + &cert.c0 * &omega * c2.adjoint();
    let b0 = &r.b2 - &pd.gamma * &gain + &cert.a0 * &omega * c2.adjoint();
    let b0_alt = &r.b2 - &pd.gamma * &d0 + &r.a * &omega * c2.adjoint();

    let d_u = r.d1.adjoint() * &d0 + r.b1.adjoint() * q_mat * &b0;
    let d_v_raw = linalg::eye(r.dims().q) + r.d2.adjoint() * &d0 + r.b2.adjoint() * q_mat * &b0;
    let d_v = linalg::hermitian_part(&d_v_raw);
    let min_dv = linalg::min_eig(&d_v);
    if !(min_dv > 0.0) {
        return Err(inconsistent(&format!("D_V is not positive definite (min eigenvalue {min_dv:e})")));
    }
    let q_dim = d_v.nrows();
    let d_v_inv = linalg::hpd_solve(&d_v, &linalg::eye(q_dim)).ok_or_else(|| inconsistent("D_V is singular"))?;
    let d_v_half = linalg::hermitian_sqrt(&d_v);

    let b_cross = &b0 * &d_v_inv;
    let a_cross = &cert.a0 - &b_cross * &c2;
    let rho_a_cross = linalg::spectral_radius(&a_cross)?;

    let d_x = linalg::solve_right(&d_u, &d_v).ok_or_else(|| inconsistent("D_V is singular"))?;
    let x = TransferFunction::new(d_x.clone(), &c1 - &d_x * &c2, a_cross.clone(), b_cross.clone())?;
    let u = TransferFunction::new(d_u.clone(), c1.clone(), cert.a0.clone(), b0.clone())?;
    let v = TransferFunction::new(d_v.clone(), c2.clone(), cert.a0.clone(), b0.clone())?;
    let v_inv = TransferFunction::new(d_v_inv.clone(), -(&d_v_inv * &c2), a_cross.clone(), b_cross.clone())?;
    let theta_d = &d_v_half * &d_v_inv;
    let theta = TransferFunction::new(theta_d.clone(), -(&theta_d * &c2), a_cross.clone(), b_cross)?;

    let entropy = 0.0 - linalg::log_det_hpd(&d_v).ok_or_else(|| inconsistent("D_V is singular"))?;

    Ok(SolutionBundle {
        omega,
        omega_alt,
        omega0,
        c1,
        c2,
        d0,
        b0,
        b0_alt,
        d_u,
        d_v,
        a_cross,
        rho_a_cross,
        x,
        u,
        v,
        v_inv,
        theta,
        entropy,
    })
}

/// Trapezoid rule for `(1/2pi) int ln det (I - X* X) d omega` on a uniform grid.
pub fn entropy_integral(x: &TransferFunction, grid: usize) -> Result<f64> {
    if grid == 0 {
        return Err(Error::Precondition("entropy grid must be non-empty".into()));
    }
    let q = x.cols();
    let mut sum = 0.0;
    for omega in linalg::uniform_grid(grid) {
        let xv = x.eval(linalg::circle(omega))?;
        let defect = linalg::eye(q) - xv.adjoint() * &xv;
        match linalg::log_det_hpd(&defect) {
            Some(ld) => sum += ld,
            None => return Err(Error::MetricViolation { omega, min_eig: linalg::min_eig(&defect) }),
        }
    }
    Ok(sum / grid as f64)
}

#[derive(Clone, Debug)]
pub struct SupNorm {
    pub value: f64,
    pub omega: f64,
    pub grid_points: usize,
    pub refine_depth: usize,
}

fn sigma_max(tf: &TransferFunction, omega: f64) -> Result<f64> {
    Ok(linalg::norm2(&tf.eval(linalg::circle(omega))?))
}

/// `sup_omega sigma_max(F(e^{i omega}))` from a uniform grid followed by
/// golden-section refinement around the largest local maxima.
pub fn supnorm_estimate(tf: &TransferFunction, grid: usize, refine_depth: usize) -> Result<SupNorm> {
    if grid < 3 {
        return Err(Error::Precondition("supnorm grid needs at least 3 points".into()));
    }
    let omegas = linalg::uniform_grid(grid);
    let vals: Vec<f64> = omegas.iter().map(|&w| sigma_max(tf, w)).collect::<Result<_>>()?;
    let mut peaks: Vec<usize> = (0..grid)
        .filter(|&k| vals[k] >= vals[(k + grid - 1) % grid] && vals[k] >= vals[(k + 1) % grid])
        .collect();
    peaks.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    peaks.truncate(8);

    let mut best = SupNorm { value: 0.0, omega: 0.0, grid_points: grid, refine_depth };
    for (k, &v) in vals.iter().enumerate() {
        if v > best.value {
            best.value = v;
            best.omega = omegas[k];
        }
    }
    let h = 2.0 * std::f64::consts::PI / grid as f64;
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for &k in &peaks {
        let (mut lo, mut hi) = (omegas[k] - h, omegas[k] + h);
        let mut x1 = hi - phi * (hi - lo);
        let mut x2 = lo + phi * (hi - lo);
        let mut f1 = sigma_max(tf, x1)?;
        let mut f2 = sigma_max(tf, x2)?;
        for _ in 0..refine_depth {
            if f1 > f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = sigma_max(tf, x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = sigma_max(tf, x2)?;
            }
        }
        for (w, f) in [(x1, f1), (x2, f2)] {
            if f > best.value {
                best.value = f;
                best.omega = w.rem_euclid(2.0 * std::f64::consts::PI);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equations::{compute_problem_data, solve_dare_stabilizing, DareOptions};
    use crate::linalg::{from_real, scalar, zeros};

    fn solve(r: &Realization) -> SolutionBundle {
        let pd = compute_problem_data(r).unwrap();
        let cert = solve_dare_stabilizing(r, &pd, &DareOptions::default()).unwrap();
        synthesize(r, &pd, &cert).unwrap()
    }

    #[test]
    fn constant_scalar_case() {
        let r = Realization::new(zeros(0, 0), zeros(0, 1), zeros(0, 1), zeros(1, 0), scalar(2.0), scalar(1.0)).unwrap();
        let s = solve(&r);
        assert!((s.d0[(0, 0)].re - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.d_u[(0, 0)].re - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.d_v[(0, 0)].re - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.x.d[(0, 0)].re, 0.5);
        assert!((s.entropy - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_k_gives_zero_solution() {
        let a = from_real(1, 1, &[0.5]);
        let r = Realization::new(a, scalar(1.0), zeros(1, 1), scalar(1.0), scalar(1.0), zeros(1, 1)).unwrap();
        let s = solve(&r);
        let coeffs = s.x.taylor_coefficients(12);
        assert!(coeffs.iter().all(|c| linalg::fnorm(c) < 1e-12));
        assert!((s.d_v[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(s.entropy.abs() < 1e-12);
    }

    #[test]
    fn entropy_and_supnorm_of_constant() {
        let x = TransferFunction::constant(scalar(0.5));
        assert!((entropy_integral(&x, 16).unwrap() - 0.75f64.ln()).abs() < 1e-15);
        assert!((supnorm_estimate(&x, 16, 10).unwrap().value - 0.5).abs() < 1e-15);
        let big = TransferFunction::constant(scalar(1.5));
        assert!(matches!(entropy_integral(&big, 8), Err(Error::MetricViolation { .. })));
    }

    #[test]
    fn supnorm_of_first_order_lowpass() {
        // 1 / (1 - 0.5 z) peaks at omega = 0 with value 2
        let f = TransferFunction::new(scalar(1.0), scalar(0.5), scalar(0.5), scalar(1.0)).unwrap();
        let s = supnorm_estimate(&f, 64, 30).unwrap();
        assert!((s.value - 2.0).abs() < 1e-12);
    }
}
