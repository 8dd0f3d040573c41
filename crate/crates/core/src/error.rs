use thiserror::Error;

use crate::equations::NotStrictlyPositive;
use crate::realization::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix shapes do not fit together.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The realization is well formed but violates stability or observability.
    #[error("invalid realization: {}", fmt_violations(.0))]
    InvalidRealization(Vec<Violation>),

    #[error("matrix I - zA is numerically singular at z = {z} (condition estimate {condition:.3e})")]
    Singular { z: String, condition: f64 },

    #[error("point z = {z} is not on the unit circle (|z| = {modulus})")]
    Domain { z: String, modulus: f64 },

    #[error("Stein equation has no unique solution: spectral radius {spectral_radius} >= 1")]
    NoUniqueSolution { spectral_radius: f64 },

    #[error("Stein equation is resonant: eigenvalue product {product} is within tolerance of 1")]
    Resonance { product: String },

    #[error("{0}")]
    NotStrictlyPositive(NotStrictlyPositive),

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A supposedly impossible breakdown, e.g. a singular `D_V` under a valid certificate.
    #[error("inconsistent certificate: {0}")]
    Inconsistent(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// I - X*X is not positive definite on the circle.
    #[error("metric constraint violated at omega = {omega}: min eigenvalue {min_eig}")]
    MetricViolation { omega: f64, min_eig: f64 },

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
