//! Identity and operator checks assembled into a serializable report.

use serde::{Deserialize, Serialize};

use crate::equations::{riccati_residual, ProblemData, RiccatiCertificate};
use crate::error::Result;
use crate::io::flexible_f64;
use crate::linalg::{self, CMat, Cx};
use crate::realization::{eval_r, mcmillan_degree_estimate, Dimensions, Realization};
use crate::synthesis::{entropy_integral, supnorm_estimate, SolutionBundle};
use crate::toeplitz::{build_sections, central_solution_taylor, check_inversion_identities};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub formula: String,
    #[serde(with = "flexible_f64")]
    pub residual: f64,
    #[serde(with = "flexible_f64")]
    pub tolerance: f64,
    pub pass: bool,
    pub mandatory: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub dims: Dimensions,
    pub seed: Option<u64>,
    #[serde(with = "flexible_f64")]
    pub rho_a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub fingerprint: Fingerprint,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn new(fingerprint: Fingerprint) -> Self {
        Self { fingerprint, pass: true, checks: Vec::new() }
    }

    fn push(&mut self, name: &str, formula: &str, residual: f64, tolerance: f64, mandatory: bool) {
        let pass = residual <= tolerance;
        if mandatory && !pass {
            self.pass = false;
        }
        self.checks.push(Check {
            name: name.to_string(),
            formula: formula.to_string(),
            residual,
            tolerance,
            pass,
            mandatory,
        });
    }

    pub fn merge(&mut self, other: VerificationReport) {
        self.pass &= other.pass;
        self.checks.extend(other.checks);
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.mandatory && !c.pass)
    }
}

#[derive(Clone, Debug)]
pub struct Tolerances {
    pub identity: f64,
    pub circle_identity: f64,
    pub interpolation: f64,
    pub spectral_factor: f64,
    pub operator: f64,
    pub taylor: f64,
    pub entropy_rel: f64,
    pub supnorm_margin: f64,
    pub closing_identity: f64,
    pub mcmillan_rel: f64,
    pub residual_grid: usize,
    pub entropy_grid: usize,
    pub circle_points: usize,
    pub taylor_count: usize,
    /// Treat the closing identity for `C1* C1 - C2* C2` as mandatory.
    pub promote_closing_identity: bool,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-10,
            circle_identity: 1e-9,
            interpolation: 1e-9,
            spectral_factor: 1e-8,
            operator: 1e-6,
            taylor: 1e-6,
            entropy_rel: 1e-6,
            supnorm_margin: 1e-6,
            closing_identity: 1e-8,
            mcmillan_rel: 1e-10,
            residual_grid: 512,
            entropy_grid: 4096,
            circle_points: 32,
            taylor_count: 16,
            promote_closing_identity: false,
        }
    }
}

impl Tolerances {
    /// Multiply every residual tolerance by `factor`; grids are unchanged.
    pub fn scaled(mut self, factor: f64) -> Self {
        for t in [
            &mut self.identity,
            &mut self.circle_identity,
            &mut self.interpolation,
            &mut self.spectral_factor,
            &mut self.operator,
            &mut self.taylor,
            &mut self.entropy_rel,
            &mut self.closing_identity,
        ] {
            *t *= factor;
        }
        self
    }
}

fn fingerprint(r: &Realization) -> Fingerprint {
    Fingerprint {
        dims: r.dims(),
        seed: None,
        rho_a: linalg::spectral_radius(&r.a).unwrap_or(f64::NAN),
    }
}

fn nrm(m: &CMat) -> f64 {
    linalg::fnorm(m)
}

/// Worst value of `f` over a uniform circle grid; an evaluation failure
/// counts as an infinite residual.
fn grid_max(points: usize, mut f: impl FnMut(Cx) -> Result<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for omega in linalg::uniform_grid(points) {
        match f(linalg::circle(omega)) {
            Ok(v) if v.is_finite() => worst = worst.max(v),
            _ => return f64::INFINITY,
        }
    }
    worst
}

pub fn run_identity_suite(
    r: &Realization,
    pd: &ProblemData,
    cert: &RiccatiCertificate,
    sol: &SolutionBundle,
    tol: &Tolerances,
) -> VerificationReport {
    let mut rep = VerificationReport::new(fingerprint(r));
    let n = r.dims().n;
    let q = &cert.q;
    let n_diff = pd.n_diff();
    let t = tol.identity;

    rep.push(
        "riccati",
        "Q = A*QA + (C - Gamma*QA)* Delta^{-1} (C - Gamma*QA)",
        riccati_residual(r, pd, q),
        t * (1.0 + nrm(q)),
        true,
    );
    rep.push("delta_positive", "min eig Delta > 0", -cert.min_eig_delta, 0.0, true);
    rep.push("a0_stable", "rho(A0) < 1", cert.rho_a0, 1.0 - f64::EPSILON, true);
    rep.push("a_cross_stable", "rho(A0 - B0 D_V^{-1} C2) < 1", sol.rho_a_cross, 1.0 - f64::EPSILON, true);
    rep.push(
        "coupling_positive",
        "min eig (Q^{-1} + P2 - P1) > 0",
        -cert.min_eig_cond_ii,
        0.0,
        true,
    );
    rep.push(
        "coupling_positive_congruent",
        "min eig (I + Q^{1/2}(P2 - P1)Q^{1/2}) > 0",
        -cert.min_eig_cond_ii_congruent,
        0.0,
        true,
    );
    rep.push("d_v_positive", "min eig D_V > 0", -linalg::min_eig(&sol.d_v), 0.0, true);

    let lhs = &r.b1 * &sol.c1 - &r.b2 * &sol.c2;
    let rhs = &r.a * &sol.omega0 - &sol.omega0 * &cert.a0;
    let scale = 1.0 + nrm(&r.b1) * nrm(&sol.c1) + nrm(&r.b2) * nrm(&sol.c2) + 2.0 * nrm(&r.a).max(nrm(&cert.a0)) * nrm(&sol.omega0);
    rep.push("state_coupling", "B1 C1 - B2 C2 = A Omega0 - Omega0 A0", nrm(&(lhs - rhs)), t * scale, true);

    let lhs = &r.d1 * &sol.c1 - &r.d2 * &sol.c2;
    let rhs = &r.c * &sol.omega0;
    let scale = 1.0 + nrm(&r.d1) * nrm(&sol.c1) + nrm(&r.d2) * nrm(&sol.c2) + nrm(&r.c) * nrm(&sol.omega0);
    rep.push("output_coupling", "D1 C1 - D2 C2 = C Omega0", nrm(&(lhs - rhs)), t * scale, true);

    let lhs = &r.b1 * &sol.d_u - &r.b2 * &sol.d_v;
    let rhs = -(&sol.omega0 * &sol.b0);
    let scale = 1.0 + nrm(&r.b1) * nrm(&sol.d_u) + nrm(&r.b2) * nrm(&sol.d_v) + nrm(&sol.omega0) * nrm(&sol.b0);
    rep.push("input_coupling", "B1 D_U - B2 D_V = -Omega0 B0", nrm(&(lhs - rhs)), t * scale, true);

    let lhs = &r.d1 * &sol.d_u - &r.d2 * &sol.d_v;
    let scale = 1.0 + nrm(&r.d1) * nrm(&sol.d_u) + nrm(&r.d2) * nrm(&sol.d_v);
    rep.push("feedthrough_coupling", "D1 D_U - D2 D_V = 0", nrm(&lhs), t * scale, true);

    rep.push("stein_closed_loop", "Q - A* Q A0 = C* C0", cert.stein_residual, t * (1.0 + nrm(q)), true);

    let res = &sol.omega + &n_diff + &n_diff * q * &sol.omega;
    let scale = 1.0 + nrm(&sol.omega) + nrm(&n_diff) * (1.0 + nrm(q) * nrm(&sol.omega));
    rep.push("omega_equation", "Omega + (P2 - P1) + (P2 - P1) Q Omega = 0", nrm(&res), t * scale, true);

    match &sol.omega_alt {
        Some(alt) => rep.push(
            "omega_forms",
            "(P1 - P2)(I + Q(P2 - P1))^{-1} = (P1 - P2)(Q^{-1} + P2 - P1)^{-1} Q^{-1}",
            nrm(&(&sol.omega - alt)),
            t * (1.0 + nrm(&sol.omega)) * linalg::condition(q).max(1.0),
            true,
        ),
        None => rep.push("omega_forms", "second form needs Q^{-1}; Q is singular to working precision", f64::NAN, 0.0, false),
    }
    rep.push(
        "b0_forms",
        "B0 = B2 - Gamma D0 + A Omega C2*",
        nrm(&(&sol.b0 - &sol.b0_alt)),
        t * (1.0 + nrm(&sol.b0) + nrm(&pd.gamma) * nrm(&sol.d0) + nrm(&r.a) * nrm(&sol.omega) * nrm(&sol.c2)),
        true,
    );

    // R(z) C0 (I - z A0)^{-1} = C (I - z A)^{-1} + Gamma* (z I - A*)^{-1} Q
    let eye_n = linalg::eye(n);
    let mut circle_scale: f64 = 0.0;
    let circle_res = grid_max(tol.circle_points, |z| {
        let rz = eval_r(r, pd, z)?;
        let res_a0 = solve_or_fail(&(&eye_n - &cert.a0 * z), &eye_n)?;
        let res_a = solve_or_fail(&(&eye_n - &r.a * z), &eye_n)?;
        let res_adj = solve_or_fail(&(&eye_n * z - r.a.adjoint()), q)?;
        let lhs = &rz * &cert.c0 * res_a0;
        let t1 = &r.c * res_a;
        let t2 = pd.gamma.adjoint() * res_adj;
        circle_scale = circle_scale.max(nrm(&lhs) + nrm(&t1) + nrm(&t2));
        Ok(nrm(&(lhs - t1 - t2)))
    });
    rep.push(
        "r_factorization",
        "R(z) C0 (I - z A0)^{-1} = C (I - z A)^{-1} + Gamma* (z I - A*)^{-1} Q on the circle",
        circle_res,
        tol.circle_identity * (1.0 + circle_scale),
        true,
    );

    let nq = q + q * &n_diff * q;
    let lhs = sol.c1.adjoint() * &sol.c1 - sol.c2.adjoint() * &sol.c2;
    let rhs = &nq - cert.a0.adjoint() * &nq * &cert.a0;
    rep.push(
        "closing_identity",
        "C1* C1 - C2* C2 = M - A0* M A0, M = Q + Q(P2 - P1)Q",
        nrm(&(lhs - rhs)),
        tol.closing_identity * (1.0 + nrm(&sol.c1).powi(2) + nrm(&sol.c2).powi(2) + 2.0 * nrm(&nq)),
        tol.promote_closing_identity,
    );

    let (g, k) = (r.g(), r.k());
    let mut k_sup: f64 = 0.0;
    let interp = grid_max(tol.residual_grid, |z| {
        let kz = k.eval(z)?;
        k_sup = k_sup.max(linalg::norm2(&kz));
        Ok(nrm(&(g.eval(z)? * sol.x.eval(z)? - kz)))
    });
    rep.push("interpolation", "G(z) X(z) = K(z) on the circle", interp, tol.interpolation * (1.0 + k_sup), true);

    let mut fscale: f64 = 0.0;
    let factor = grid_max(tol.residual_grid, |z| {
        let gu = g.eval(z)? * sol.u.eval(z)?;
        let kv = k.eval(z)? * sol.v.eval(z)?;
        fscale = fscale.max(nrm(&gu) + nrm(&kv));
        Ok(nrm(&(gu - kv)))
    });
    rep.push("factor_identity", "G(z) U(z) = K(z) V(z) on the circle", factor, tol.interpolation * (1.0 + fscale), true);

    let qd = r.dims().q;
    let outer = grid_max(tol.residual_grid, |z| {
        let xz = sol.x.eval(z)?;
        let th = sol.theta.eval(z)?;
        Ok(nrm(&(linalg::eye(qd) - xz.adjoint() * &xz - th.adjoint() * th)))
    });
    rep.push("spectral_factor", "I - X* X = Theta* Theta on the circle", outer, tol.spectral_factor, true);

    let sup = supnorm_estimate(&sol.x, tol.residual_grid.max(3), 40).map(|s| s.value).unwrap_or(f64::INFINITY);
    rep.push("contraction", "sup |X(e^{iw})| < 1", sup, 1.0 - tol.supnorm_margin, true);

    match entropy_integral(&sol.x, tol.entropy_grid) {
        Ok(e) => rep.push(
            "entropy",
            "(1/2pi) int ln det (I - X* X) dw = -ln det D_V",
            (e - sol.entropy).abs(),
            tol.entropy_rel * sol.entropy.abs() + 1e-14,
            true,
        ),
        Err(_) => rep.push("entropy", "I - X* X not positive on the grid", f64::INFINITY, 0.0, true),
    }
    rep.push("entropy_sign", "entropy <= 0", sol.entropy, 0.0, true);

    let degree = mcmillan_degree_estimate(&sol.x, tol.mcmillan_rel).map(|d| d as f64).unwrap_or(f64::INFINITY);
    rep.push("degree", "McMillan degree of X <= state dimension", degree, n as f64, true);

    rep
}

fn solve_or_fail(a: &CMat, b: &CMat) -> Result<CMat> {
    linalg::solve(a, b).ok_or_else(|| crate::error::Error::Numerical("singular resolvent on the circle".into()))
}

pub fn run_operator_suite(
    r: &Realization,
    pd: &ProblemData,
    cert: &RiccatiCertificate,
    sol: &SolutionBundle,
    sections: usize,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let bundle = build_sections(r, sections)?;
    let mut rep = VerificationReport::new(fingerprint(r));
    let margin = crate::toeplitz::positivity_margin(&bundle);
    if !(margin > 0.0) {
        return Err(crate::error::Error::Precondition(format!(
            "section of T_G T_G* - T_K T_K* has min eigenvalue {margin:e} at N = {sections}"
        )));
    }
    rep.push("section_positive", "min eig (T_G T_G* - T_K T_K*)_N > 0", -margin, 0.0, true);

    let res = check_inversion_identities(&bundle, pd, cert)?;
    let t = tol.operator * res.scale;
    rep.push("gram_decomposition", "T_G T_G* - T_K T_K* = T_R + W (P2 - P1) W*", res.gram_decomposition, t, true);
    rep.push(
        "inverse_formula",
        "(T_G T_G* - T_K T_K*)^{-1} = T_R^{-1} + T_R^{-1} W Omega W* T_R^{-1}",
        res.inverse_formula,
        t,
        true,
    );
    rep.push("q_recovery", "Q = W* T_R^{-1} W", res.q_recovery, t, true);
    rep.push("w0_recovery", "T_R^{-1} W = W0", res.w0_recovery_full, t, true);
    rep.push("w0_recovery_leading", "T_R^{-1} W = W0 on the leading half", res.w0_recovery, t, false);
    rep.push("lambda_contraction", "|Lambda_N| < 1", res.lambda_norm, 1.0 - 1e-10, true);
    let hank = tol.operator * (1.0 + nrm(&pd.p1) + nrm(&pd.p2)) * (1.0 + nrm(&bundle.w_obs).powi(2));
    rep.push("hankel_g", "H_G H_G* = W P1 W*", res.hankel_g, hank, true);
    rep.push("hankel_k", "H_K H_K* = W P2 W*", res.hankel_k, hank, true);
    rep.push(
        "hankel_factor",
        "H_G = W W_con1, H_K = W W_con2",
        res.hankel_factor,
        tol.identity * (1.0 + nrm(&bundle.h_g) + nrm(&bundle.h_k)),
        true,
    );
    rep.push(
        "r_coefficients",
        "R_0 = D1 D1* - D2 D2* + C(P1 - P2)C*, R_nu = C A^{nu-1} Gamma",
        res.t_r_realization,
        tol.identity * (1.0 + nrm(&pd.r0) + nrm(&r.c) * nrm(&pd.gamma)),
        true,
    );
    rep.push("f_spectral_radius", "rho(F_N) <= 1", res.f_spectral_radius, 1.0 + 1e-6, false);

    let count = tol.taylor_count.min(sections);
    let series = central_solution_taylor(&bundle, count)?;
    let closed = sol.x.taylor_coefficients(count);
    let taylor = (0..count).map(|k| nrm(&(&closed[k] - &series.x[k]))).fold(0.0, f64::max);
    rep.push("taylor_agreement", "Taylor coefficients of X match the section solution", taylor, tol.taylor, true);

    let lifting = bundle.lifting.as_ref().expect("positive section has lifting data");
    let qd = r.dims().q;
    let nq = lifting.lambda.ncols();
    let defect = linalg::eye(nq) - lifting.lambda.adjoint() * &lifting.lambda;
    let e_q = linalg::block(&linalg::eye(nq), 0, 0, nq, qd);
    let section_entropy = linalg::hpd_solve(&defect, &e_q)
        .and_then(|y| linalg::log_det_hpd(&y.rows(0, qd).into_owned()))
        .map(|ld| -ld)
        .unwrap_or(f64::NAN);
    rep.push(
        "section_entropy",
        "-ln det E_q* (I - Lambda* Lambda)^{-1} E_q = -ln det D_V",
        (section_entropy - sol.entropy).abs(),
        tol.entropy_rel * (1.0 + sol.entropy.abs()),
        true,
    );
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equations::{compute_problem_data, solve_dare_stabilizing, DareOptions};
    use crate::linalg::{scalar, zeros};
    use crate::synthesis::synthesize;

    fn constant_instance() -> Realization {
        Realization::new(zeros(0, 0), zeros(0, 1), zeros(0, 1), zeros(1, 0), scalar(2.0), scalar(1.0)).unwrap()
    }

    #[test]
    fn constant_case_reports() {
        let r = constant_instance();
        let pd = compute_problem_data(&r).unwrap();
        let cert = solve_dare_stabilizing(&r, &pd, &DareOptions::default()).unwrap();
        let sol = synthesize(&r, &pd, &cert).unwrap();
        let tol = Tolerances::default();
        let rep = run_identity_suite(&r, &pd, &cert, &sol, &tol);
        assert!(rep.pass, "{:?}", rep.failures().collect::<Vec<_>>());
        assert_eq!(rep.check("feedthrough_coupling").unwrap().residual, 0.0);
        let op = run_operator_suite(&r, &pd, &cert, &sol, 8, &tol).unwrap();
        assert!(op.pass, "{:?}", op.failures().collect::<Vec<_>>());
        assert!(op.check("section_entropy").unwrap().residual < 1e-15);
        assert!((op.check("lambda_contraction").unwrap().residual - 0.5).abs() < 1e-15);
    }

    #[test]
    fn report_round_trips() {
        let r = constant_instance();
        let pd = compute_problem_data(&r).unwrap();
        let cert = solve_dare_stabilizing(&r, &pd, &DareOptions::default()).unwrap();
        let sol = synthesize(&r, &pd, &cert).unwrap();
        let rep = run_identity_suite(&r, &pd, &cert, &sol, &Tolerances::default());
        let text = serde_json::to_string(&rep).unwrap();
        let back: VerificationReport = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn overall_pass_ignores_informational() {
        let mut rep = VerificationReport::new(fingerprint(&constant_instance()));
        rep.push("info", "x", 2.0, 1.0, false);
        assert!(rep.pass);
        rep.push("hard", "x", 2.0, 1.0, true);
        assert!(!rep.pass);
        assert_eq!(rep.failures().count(), 1);
    }
}
