//! Finite sections of the infinite block operators built from the data:
//! Toeplitz operators `T_G`, `T_K`, `T_R`, the observability and
//! controllability operators, Hankel operators, and the commutant-lifting
//! quantities `Lambda`, `Xi`, `F`.
//!
//! Everything here is assembled from Taylor coefficients of `G` and `K`
//! directly. In particular the section of `T_R` is obtained by convolving the
//! coefficient sequences of `G` and `K`, not from `R0`/`Gamma`, so that the
//! closed-form solver in [`crate::equations`] and [`crate::synthesis`] can be
//! checked against it.

use serde::{Deserialize, Serialize};

use crate::equations::{ProblemData, RiccatiCertificate};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::realization::{Dimensions, Realization};

/// Leading `N x N` block section of a block lower triangular Toeplitz operator.
#[derive(Clone, Debug)]
pub struct BlockToeplitzSection {
    pub symbol: String,
    pub block_rows: usize,
    pub block_cols: usize,
    pub sections: usize,
    pub matrix: CMat,
}

impl BlockToeplitzSection {
    /// Block `(i, j)` is `coeffs[i - j]` for `i >= j`, zero above the diagonal.
    pub fn lower(symbol: &str, coeffs: &[CMat], sections: usize) -> Self {
        let (k, r) = coeffs[0].shape();
        let mut matrix = linalg::zeros(sections * k, sections * r);
        for i in 0..sections {
            for j in 0..=i {
                matrix.view_mut((i * k, j * r), (k, r)).copy_from(&coeffs[i - j]);
            }
        }
        Self { symbol: symbol.to_string(), block_rows: k, block_cols: r, sections, matrix }
    }

    pub fn block(&self, i: usize, j: usize) -> CMat {
        linalg::block(&self.matrix, i * self.block_rows, j * self.block_cols, self.block_rows, self.block_cols)
    }

    /// `T E_r`: the first block column.
    pub fn first_column(&self) -> CMat {
        linalg::block(&self.matrix, 0, 0, self.matrix.nrows(), self.block_cols)
    }
}

/// Number of extra Taylor coefficients needed for tail sums to fall below
/// roughly `1e-17` relative, using the rate `(1 + rho) / 2`.
pub fn tail_length(rho: f64) -> usize {
    if rho <= 0.0 {
        return 1;
    }
    let rate = 0.5 * (1.0 + rho);
    ((40.0 / -rate.ln()).ceil() as usize).clamp(1, 20_000)
}

#[derive(Clone, Debug)]
pub struct OperatorModelBundle {
    pub dims: Dimensions,
    pub sections: usize,
    pub g_coeffs: Vec<CMat>,
    pub k_coeffs: Vec<CMat>,
    pub t_g: BlockToeplitzSection,
    pub t_k: BlockToeplitzSection,
    /// Section of `T_R`, `R = G G^* - K K^*`, from coefficient convolution.
    pub t_r: CMat,
    /// Laurent coefficients `R_0, R_1, ...` (`R_{-nu} = R_nu*`).
    pub r_coeffs: Vec<CMat>,
    /// Section of `T_G T_G* - T_K T_K*`.
    pub gram: CMat,
    pub w_obs: CMat,
    pub w_con1: CMat,
    pub w_con2: CMat,
    pub h_g: CMat,
    pub h_k: CMat,
    /// Present only when `gram` is positive definite.
    pub lifting: Option<LiftingSections>,
}

/// Commutant-lifting quantities on the section.
#[derive(Clone, Debug)]
pub struct LiftingSections {
    /// `T_G* (T_G T_G*)^{-1} T_K`.
    pub lambda: CMat,
    /// `(T_G T_G* - T_K T_K*)^{-1} T_K E_q`.
    pub xi: CMat,
    pub d_u: CMat,
    pub d_v: CMat,
    /// `S* - S* Xi D_V^{-1} E_q* T_K*`.
    pub f: CMat,
}

fn hankel(coeffs: &[CMat], sections: usize) -> CMat {
    let (k, r) = coeffs[0].shape();
    let mut h = linalg::zeros(sections * k, sections * r);
    for i in 0..sections {
        for j in 0..sections {
            h.view_mut((i * k, j * r), (k, r)).copy_from(&coeffs[i + j + 1]);
        }
    }
    h
}

/// Build all sections with `sections` block rows.
pub fn build_sections(r: &Realization, sections: usize) -> Result<OperatorModelBundle> {
    if sections == 0 {
        return Err(Error::Precondition("section count must be at least 1".into()));
    }
    let dims = r.dims();
    let (n, m) = (dims.n, dims.m);
    let rho = linalg::spectral_radius(&r.a)?;
    let tail = if n == 0 { 1 } else { tail_length(rho) };
    let count = (2 * sections).max(sections + tail) + 1;
    let g_coeffs = r.g().taylor_coefficients(count);
    let k_coeffs = r.k().taylor_coefficients(count);

    let t_g = BlockToeplitzSection::lower("G", &g_coeffs, sections);
    let t_k = BlockToeplitzSection::lower("K", &k_coeffs, sections);

    // R_nu = sum_k G_{k+nu} G_k* - K_{k+nu} K_k*, with a fixed number of
    // terms so that sections of different sizes nest exactly
    let terms = tail;
    let r_coeffs: Vec<CMat> = (0..sections)
        .map(|nu| {
            let mut acc = linalg::zeros(m, m);
            for k in 0..terms {
                acc += &g_coeffs[k + nu] * g_coeffs[k].adjoint() - &k_coeffs[k + nu] * k_coeffs[k].adjoint();
            }
            acc
        })
        .collect();
    let mut t_r = linalg::zeros(sections * m, sections * m);
    for i in 0..sections {
        for j in 0..sections {
            let blk = if i >= j { r_coeffs[i - j].clone() } else { r_coeffs[j - i].adjoint() };
            t_r.view_mut((i * m, j * m), (m, m)).copy_from(&blk);
        }
    }

    let gram = linalg::hermitian_part(
        &(&t_g.matrix * t_g.matrix.adjoint() - &t_k.matrix * t_k.matrix.adjoint()),
    );

    let mut obs = Vec::with_capacity(sections);
    let mut ca = r.c.clone();
    let mut con1 = Vec::with_capacity(sections);
    let mut con2 = Vec::with_capacity(sections);
    let (mut ab1, mut ab2) = (r.b1.clone(), r.b2.clone());
    for _ in 0..sections {
        obs.push(ca.clone());
        con1.push(ab1.clone());
        con2.push(ab2.clone());
        ca = &ca * &r.a;
        ab1 = &r.a * &ab1;
        ab2 = &r.a * &ab2;
    }
    let w_obs = linalg::vstack(&obs, n);
    let w_con1 = linalg::hstack(&con1, n);
    let w_con2 = linalg::hstack(&con2, n);

    let h_g = hankel(&g_coeffs, sections);
    let h_k = hankel(&k_coeffs, sections);

    let lifting = lifting_sections(&t_g, &t_k, &gram, dims, sections);

    Ok(OperatorModelBundle {
        dims,
        sections,
        g_coeffs,
        k_coeffs,
        t_g,
        t_k,
        t_r,
        r_coeffs,
        gram,
        w_obs,
        w_con1,
        w_con2,
        h_g,
        h_k,
        lifting,
    })
}

fn lifting_sections(
    t_g: &BlockToeplitzSection,
    t_k: &BlockToeplitzSection,
    gram: &CMat,
    dims: Dimensions,
    sections: usize,
) -> Option<LiftingSections> {
    let (m, q) = (dims.m, dims.q);
    let tgg = linalg::hermitian_part(&(&t_g.matrix * t_g.matrix.adjoint()));
    let lambda = t_g.matrix.adjoint() * linalg::hpd_solve(&tgg, &t_k.matrix)?;
    let k_col = t_k.first_column();
    let xi = linalg::hpd_solve(gram, &k_col)?;
    let d_u = t_g.first_column().adjoint() * &xi;
    let d_v = linalg::eye(q) + k_col.adjoint() * &xi;
    // S* Xi: shift up by one block, zero fill at the bottom
    let rows = sections * m;
    let mut s_xi = linalg::zeros(rows, q);
    if sections > 1 {
        s_xi.view_mut((0, 0), (rows - m, q)).copy_from(&xi.view((m, 0), (rows - m, q)));
    }
    let mut f = linalg::zeros(rows, rows);
    for i in 0..rows.saturating_sub(m) {
        f[(i, i + m)] = linalg::Cx::new(1.0, 0.0);
    }
    let gain = linalg::solve_right(&s_xi, &linalg::hermitian_part(&d_v))?;
    f -= gain * k_col.adjoint();
    Some(LiftingSections { lambda, xi, d_u, d_v, f })
}

/// Smallest eigenvalue of the section of `T_G T_G* - T_K T_K*`.
pub fn positivity_margin(bundle: &OperatorModelBundle) -> f64 {
    linalg::min_eig(&bundle.gram)
}

/// Taylor coefficients of `U`, `V`, `V^{-1}` and `X = U V^{-1}` computed from
/// the section of `Xi`.
#[derive(Clone, Debug)]
pub struct CentralSeries {
    pub u: Vec<CMat>,
    pub v: Vec<CMat>,
    pub v_inv: Vec<CMat>,
    pub x: Vec<CMat>,
}

/// `U_nu = sum_k G_k* Xi_{nu+k}`, `V_nu = delta_{nu,0} I + sum_k K_k* Xi_{nu+k}`;
/// `V^{-1}` by forward substitution on the coefficient sequence.
pub fn central_solution_taylor(bundle: &OperatorModelBundle, count: usize) -> Result<CentralSeries> {
    let lifting = bundle.lifting.as_ref().ok_or_else(|| {
        Error::Precondition("section of T_G T_G* - T_K T_K* is not positive definite".into())
    })?;
    let n_sec = bundle.sections;
    if count > n_sec {
        return Err(Error::Precondition(format!("{count} coefficients requested from {n_sec} sections")));
    }
    let Dimensions { m, p, q, .. } = bundle.dims;
    let xi_block = |k: usize| lifting.xi.view((k * m, 0), (m, q)).into_owned();
    let mut u = Vec::with_capacity(count);
    let mut v = Vec::with_capacity(count);
    for nu in 0..count {
        let mut un = linalg::zeros(p, q);
        let mut vn = if nu == 0 { linalg::eye(q) } else { linalg::zeros(q, q) };
        for k in 0..(n_sec - nu) {
            let x = xi_block(nu + k);
            un += bundle.g_coeffs[k].adjoint() * &x;
            vn += bundle.k_coeffs[k].adjoint() * &x;
        }
        u.push(un);
        v.push(vn);
    }
    let v0_inv = linalg::solve(&v[0], &linalg::eye(q))
        .ok_or_else(|| Error::Numerical("V(0) of the section is singular".into()))?;
    let mut v_inv: Vec<CMat> = Vec::with_capacity(count);
    for nu in 0..count {
        if nu == 0 {
            v_inv.push(v0_inv.clone());
            continue;
        }
        let mut acc = linalg::zeros(q, q);
        for j in 1..=nu {
            acc += &v[j] * &v_inv[nu - j];
        }
        v_inv.push(-(&v0_inv * acc));
    }
    let x = (0..count)
        .map(|nu| {
            let mut acc = linalg::zeros(p, q);
            for j in 0..=nu {
                acc += &u[j] * &v_inv[nu - j];
            }
            acc
        })
        .collect();
    Ok(CentralSeries { u, v, v_inv, x })
}

/// Residuals of the operator identities on one section.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InversionResiduals {
    pub sections: usize,
    /// `T_G T_G* - T_K T_K* = T_R + W (P2 - P1) W*`.
    pub gram_decomposition: f64,
    /// `(T_G T_G* - T_K T_K*)^{-1} = T_R^{-1} + T_R^{-1} W Omega W* T_R^{-1}`.
    pub inverse_formula: f64,
    /// `T_R^{-1} W = W_0` on the leading half of the section.
    pub w0_recovery: f64,
    /// The same over the full section, including the truncation boundary.
    pub w0_recovery_full: f64,
    /// `Q = W* T_R^{-1} W`.
    pub q_recovery: f64,
    /// Largest singular value of the `Lambda` section.
    pub lambda_norm: f64,
    /// `H_G H_G* = W P1 W*` and `H_K H_K* = W P2 W*`.
    pub hankel_g: f64,
    pub hankel_k: f64,
    /// `H_G = W W_con,1` and `H_K = W W_con,2` on the section.
    pub hankel_factor: f64,
    /// `T_R` section from `R0`, `Gamma` against the convolution section.
    pub t_r_realization: f64,
    /// Spectral radius of the `F` section (informational).
    pub f_spectral_radius: f64,
    /// `1 + ||T_{R,N}^{-1}||`.
    pub scale: f64,
}

/// Evaluate the operator identities relating the sections to `P1, P2, Q, Omega, W_0`.
pub fn check_inversion_identities(
    bundle: &OperatorModelBundle,
    pd: &ProblemData,
    cert: &RiccatiCertificate,
) -> Result<InversionResiduals> {
    let Dimensions { n, m, .. } = bundle.dims;
    let sections = bundle.sections;
    let n_diff = pd.n_diff();
    let w = &bundle.w_obs;

    let gram_decomposition = linalg::fnorm(&(&bundle.gram - (&bundle.t_r + w * &n_diff * w.adjoint())));

    let min_tr = linalg::min_eig(&bundle.t_r);
    if !(min_tr > 0.0) {
        return Err(Error::Precondition(format!("T_R section is not positive definite (min eig {min_tr:e})")));
    }
    let scale = 1.0 + 1.0 / min_tr;
    let tr_inv_w = linalg::hpd_solve(&bundle.t_r, w)
        .ok_or_else(|| Error::Numerical("T_R section Cholesky failed".into()))?;

    // Omega = (P1 - P2)(I + Q (P2 - P1))^{-1}
    let omega = linalg::solve_right(&(-&n_diff), &(linalg::eye(n) + &cert.q * &n_diff))
        .ok_or_else(|| Error::Numerical("I + Q (P2 - P1) is singular".into()))?;
    let rows = sections * m;
    let gram_inv = linalg::hpd_solve(&bundle.gram, &linalg::eye(rows))
        .ok_or_else(|| Error::Precondition("section of T_G T_G* - T_K T_K* is not positive definite".into()))?;
    let tr_inv = linalg::hpd_solve(&bundle.t_r, &linalg::eye(rows)).unwrap();
    let formula = &tr_inv + &tr_inv_w * &omega * tr_inv_w.adjoint();
    let inverse_formula = linalg::fnorm(&(gram_inv - formula));

    let mut w0_blocks = Vec::with_capacity(sections);
    let mut ca = cert.c0.clone();
    for _ in 0..sections {
        w0_blocks.push(ca.clone());
        ca = &ca * &cert.a0;
    }
    let w0 = linalg::vstack(&w0_blocks, n);
    let lead = sections.div_ceil(2) * m;
    let w0_recovery = linalg::fnorm(&(tr_inv_w.rows(0, lead) - w0.rows(0, lead)));
    let w0_recovery_full = linalg::fnorm(&(&tr_inv_w - &w0));

    let q_recovery = linalg::fnorm(&(&cert.q - w.adjoint() * &tr_inv_w));

    let lambda_norm = bundle.lifting.as_ref().map(|l| linalg::norm2(&l.lambda)).unwrap_or(f64::NAN);
    let f_spectral_radius = match &bundle.lifting {
        Some(l) => linalg::spectral_radius(&l.f)?,
        None => f64::NAN,
    };

    let hankel_g = linalg::fnorm(&(&bundle.h_g * bundle.h_g.adjoint() - w * &pd.p1 * w.adjoint()));
    let hankel_k = linalg::fnorm(&(&bundle.h_k * bundle.h_k.adjoint() - w * &pd.p2 * w.adjoint()));
    let hankel_factor = linalg::fnorm(&(&bundle.h_g - w * &bundle.w_con1))
        .max(linalg::fnorm(&(&bundle.h_k - w * &bundle.w_con2)));

    // R_nu = C A^{nu-1} Gamma = W_{nu-1} Gamma
    let mut t_r_realization = linalg::fnorm(&(&bundle.r_coeffs[0] - &pd.r0));
    for nu in 1..sections {
        let expected = w.rows((nu - 1) * m, m) * &pd.gamma;
        t_r_realization = t_r_realization.max(linalg::fnorm(&(&bundle.r_coeffs[nu] - expected)));
    }

    Ok(InversionResiduals {
        sections,
        gram_decomposition,
        inverse_formula,
        w0_recovery,
        w0_recovery_full,
        q_recovery,
        lambda_norm,
        hankel_g,
        hankel_k,
        hankel_factor,
        t_r_realization,
        f_spectral_radius,
        scale,
    })
}
