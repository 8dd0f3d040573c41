//! Seeded random instances with a known feasible solution: `K = G X0` for a
//! stable outer `G` and a stable `X0` with `||X0||_inf = radius`.
//!
//! `dims.n` is the order of `G` and of `X0`, so the joint realization of
//! `[G K]` has state dimension `2 n`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Cx};
use crate::realization::{validate_realization, Dimensions, Realization, TransferFunction};
use crate::synthesis::supnorm_estimate;

const MAX_ATTEMPTS: usize = 200;
/// Retry bound on the spectral radius of the zero dynamics `A - B D^{-1} C` of `G`.
pub const ZERO_RADIUS: f64 = 0.75;

#[derive(Clone, Debug)]
pub struct GeneratedInstance {
    pub seed: u64,
    pub radius: f64,
    pub g: TransferFunction,
    pub x0: TransferFunction,
    pub realization: Realization,
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        Cx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
    })
}

fn random_stable(rng: &mut ChaCha8Rng, n: usize) -> Result<CMat> {
    let m = random_matrix(rng, n, n, 1.0);
    let rho = linalg::spectral_radius(&m)?;
    let target = rng.gen_range(0.3..0.8);
    Ok(if rho > 1e-8 { m * Cx::new(target / rho, 0.0) } else { linalg::zeros(n, n) })
}

/// Outer `G` (square, `m = p`): invertible constant term and stable zeros.
fn random_outer(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Result<TransferFunction> {
    let s = 0.5 / (n.max(1) as f64).sqrt();
    for _ in 0..MAX_ATTEMPTS {
        let a = random_stable(rng, n)?;
        let b = random_matrix(rng, n, m, s);
        let c = random_matrix(rng, m, n, s);
        let d = linalg::eye(m) + random_matrix(rng, m, m, 0.2);
        if linalg::condition(&d) > 10.0 {
            continue;
        }
        let Some(dinv_c) = linalg::solve(&d, &c) else { continue };
        if linalg::spectral_radius(&(&a - &b * dinv_c))? <= ZERO_RADIUS {
            return TransferFunction::new(d, c, a, b);
        }
    }
    Err(Error::Generation("could not draw an outer G with stable zeros".into()))
}

fn random_contraction(rng: &mut ChaCha8Rng, n: usize, p: usize, q: usize, radius: f64) -> Result<TransferFunction> {
    let s = 1.0 / (n.max(1) as f64).sqrt();
    let a = random_stable(rng, n)?;
    let b = random_matrix(rng, n, q, s);
    let c = random_matrix(rng, p, n, s);
    let d = random_matrix(rng, p, q, 0.5);
    let mut x = TransferFunction::new(d, c, a, b)?;
    let sup = supnorm_estimate(&x, 2048, 40)?.value;
    if !(sup > 1e-12) {
        return Err(Error::Generation("X0 is numerically zero".into()));
    }
    let f = Cx::new(radius / sup, 0.0);
    x.c *= f;
    x.d *= f;
    Ok(x)
}

/// Draw an instance with `||X0||_inf = radius`; any positive radius is
/// accepted, so radii above one yield problems without a contractive solution.
pub fn construct_instance(seed: u64, dims: Dimensions, radius: f64) -> Result<GeneratedInstance> {
    let Dimensions { n, m, p, q } = dims;
    if m != p {
        return Err(Error::Precondition(format!("generator requires m = p, got m = {m}, p = {p}")));
    }
    if m == 0 || q == 0 {
        return Err(Error::Precondition("m, p, q must be positive".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Precondition(format!("radius must be positive, got {radius}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let g = random_outer(&mut rng, n, m)?;
        let x0 = random_contraction(&mut rng, n, p, q, radius)?;
        let k = g.series(&x0)?;
        // k has state [x_g; x_x]; G lifted to the same state has zero second block
        let b1 = linalg::vstack(&[g.b.clone(), linalg::zeros(n, p)], p);
        let realization = Realization::new(k.a.clone(), b1, k.b.clone(), k.c.clone(), g.d.clone(), k.d.clone())?;
        if validate_realization(&realization)?.is_empty() {
            return Ok(GeneratedInstance { seed, radius, g, x0, realization });
        }
    }
    Err(Error::Generation(format!("no observable instance after {MAX_ATTEMPTS} draws (seed {seed})")))
}

/// Draw a strictly feasible instance; requires `0 < radius < 1`.
pub fn generate_instance(seed: u64, dims: Dimensions, radius: f64) -> Result<GeneratedInstance> {
    if !(radius > 0.0 && radius < 1.0) {
        return Err(Error::Precondition(format!("radius must lie in (0, 1), got {radius}")));
    }
    construct_instance(seed, dims, radius)
}
