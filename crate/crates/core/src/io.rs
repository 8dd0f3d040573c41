//! Problem, solution and sweep files.
//!
//! Matrices are stored row-major as arrays of rows, each entry a `[re, im]`
//! pair. Numbers are written with the shortest representation that parses
//! back to the same `f64`, so save -> load -> save is byte-stable.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::equations::RiccatiCertificate;
use crate::error::{Error, Result};
use crate::generate::GeneratedInstance;
use crate::linalg::{self, CMat, Cx};
use crate::realization::{validate_realization, Dimensions, Realization, TransferFunction};
use crate::synthesis::SolutionBundle;

pub const PROBLEM_SCHEMA: &str = "leech-problem";
pub const SOLUTION_SCHEMA: &str = "leech-solution";
pub const VERSION: u32 = 1;

/// Serialize `f64` as a JSON number when finite and as `"NaN"`, `"inf"` or
/// `"-inf"` otherwise; plain JSON has no encoding for non-finite values.
pub mod flexible_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("NaN")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("expected a number, got {other:?}"))),
            },
        }
    }
}

pub type MatrixRows = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_rows(m: &CMat) -> MatrixRows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Rebuild a `rows x cols` matrix; `field` names the matrix in diagnostics.
pub fn rows_to_matrix(rows: &MatrixRows, nrows: usize, ncols: usize, field: &str) -> Result<CMat> {
    let bad = |message: String| Error::Parse { path: field.to_string(), message };
    if rows.len() != nrows {
        return Err(bad(format!("expected {nrows} rows, found {}", rows.len())));
    }
    let mut m = linalg::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(bad(format!("row {i}: expected {ncols} entries, found {}", row.len())));
        }
        for (j, [re, im]) in row.iter().enumerate() {
            if !(re.is_finite() && im.is_finite()) {
                return Err(bad(format!("entry ({i}, {j}) is not finite")));
            }
            m[(i, j)] = Cx::new(*re, *im);
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub struct ProblemFile {
    #[serde(rename = "schema")]
    pub schema: String,
    #[serde(rename = "version")]
    pub version: u32,
    #[serde(rename = "dims")]
    pub dims: Dimensions,
    pub a: MatrixRows,
    pub b1: MatrixRows,
    pub b2: MatrixRows,
    pub c: MatrixRows,
    pub d1: MatrixRows,
    pub d2: MatrixRows,
    #[serde(rename = "metadata", default)]
    pub metadata: Metadata,
}

impl ProblemFile {
    pub fn from_realization(r: &Realization, metadata: Metadata) -> Self {
        Self {
            schema: PROBLEM_SCHEMA.to_string(),
            version: VERSION,
            dims: r.dims(),
            a: matrix_to_rows(&r.a),
            b1: matrix_to_rows(&r.b1),
            b2: matrix_to_rows(&r.b2),
            c: matrix_to_rows(&r.c),
            d1: matrix_to_rows(&r.d1),
            d2: matrix_to_rows(&r.d2),
            metadata,
        }
    }

    pub fn from_generated(inst: &GeneratedInstance) -> Self {
        let description = format!("K = G X0 with sup |X0| = {}", inst.radius);
        Self::from_realization(&inst.realization, Metadata { seed: Some(inst.seed), description: Some(description) })
    }

    /// Shapes are checked against `dims`; stability and observability are not.
    pub fn to_realization(&self) -> Result<Realization> {
        if self.schema != PROBLEM_SCHEMA {
            return Err(Error::Parse { path: "schema".into(), message: format!("expected {PROBLEM_SCHEMA:?}, found {:?}", self.schema) });
        }
        if self.version != VERSION {
            return Err(Error::Parse { path: "version".into(), message: format!("unsupported version {}", self.version) });
        }
        let Dimensions { n, m, p, q } = self.dims;
        Realization::new(
            rows_to_matrix(&self.a, n, n, "A")?,
            rows_to_matrix(&self.b1, n, p, "B1")?,
            rows_to_matrix(&self.b2, n, q, "B2")?,
            rows_to_matrix(&self.c, m, n, "C")?,
            rows_to_matrix(&self.d1, m, p, "D1")?,
            rows_to_matrix(&self.d2, m, q, "D2")?,
        )
    }
}

fn located(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { path: field, message } => Error::Parse { path: format!("{}: field {field}", path.display()), message },
        other => other,
    }
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        path: format!("{}:{}:{}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    }
}

pub fn read_problem_file(path: &Path) -> Result<ProblemFile> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| json_error(path, e))
}

/// Parse and validate a problem file.
pub fn load_problem(path: &Path) -> Result<Realization> {
    let file = read_problem_file(path)?;
    let r = file.to_realization().map_err(|e| located(path, e))?;
    let violations = validate_realization(&r)?;
    if !violations.is_empty() {
        return Err(Error::InvalidRealization(violations));
    }
    Ok(r)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value))?;
    Ok(())
}

pub fn save_problem(path: &Path, file: &ProblemFile) -> Result<()> {
    save_json(path, file)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub rows: usize,
    pub cols: usize,
    pub order: usize,
    #[serde(rename = "D")]
    pub d: MatrixRows,
    #[serde(rename = "C")]
    pub c: MatrixRows,
    #[serde(rename = "A")]
    pub a: MatrixRows,
    #[serde(rename = "B")]
    pub b: MatrixRows,
}

impl RealizationRecord {
    pub fn new(tf: &TransferFunction) -> Self {
        Self {
            rows: tf.rows(),
            cols: tf.cols(),
            order: tf.order(),
            d: matrix_to_rows(&tf.d),
            c: matrix_to_rows(&tf.c),
            a: matrix_to_rows(&tf.a),
            b: matrix_to_rows(&tf.b),
        }
    }

    pub fn to_transfer_function(&self, field: &str) -> Result<TransferFunction> {
        let f = |name: &str| format!("{field}.{name}");
        TransferFunction::new(
            rows_to_matrix(&self.d, self.rows, self.cols, &f("D"))?,
            rows_to_matrix(&self.c, self.rows, self.order, &f("C"))?,
            rows_to_matrix(&self.a, self.order, self.order, &f("A"))?,
            rows_to_matrix(&self.b, self.order, self.cols, &f("B"))?,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    #[serde(rename = "Q")]
    pub q: MatrixRows,
    #[serde(rename = "Delta")]
    pub delta: MatrixRows,
    #[serde(with = "flexible_f64")]
    pub rho_a0: f64,
    #[serde(with = "flexible_f64")]
    pub min_eig_delta: f64,
    #[serde(with = "flexible_f64")]
    pub min_eig_q: f64,
    #[serde(with = "flexible_f64")]
    pub min_eig_cond_ii: f64,
    #[serde(with = "flexible_f64")]
    pub min_eig_cond_ii_congruent: f64,
    #[serde(with = "flexible_f64")]
    pub riccati_residual: f64,
    #[serde(with = "flexible_f64")]
    pub stein_residual: f64,
    pub sections_used: usize,
    pub newton_iterations: usize,
}

impl CertificateRecord {
    pub fn new(cert: &RiccatiCertificate) -> Self {
        Self {
            q: matrix_to_rows(&cert.q),
            delta: matrix_to_rows(&cert.delta),
            rho_a0: cert.rho_a0,
            min_eig_delta: cert.min_eig_delta,
            min_eig_q: cert.min_eig_q,
            min_eig_cond_ii: cert.min_eig_cond_ii,
            min_eig_cond_ii_congruent: cert.min_eig_cond_ii_congruent,
            riccati_residual: cert.riccati_residual,
            stein_residual: cert.stein_residual,
            sections_used: cert.sections_used,
            newton_iterations: cert.newton_iterations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub schema: String,
    pub version: u32,
    pub dims: Dimensions,
    #[serde(rename = "X")]
    pub x: RealizationRecord,
    #[serde(rename = "U")]
    pub u: RealizationRecord,
    #[serde(rename = "V")]
    pub v: RealizationRecord,
    #[serde(with = "flexible_f64")]
    pub entropy: f64,
    #[serde(with = "flexible_f64")]
    pub supnorm: f64,
    pub certificate: CertificateRecord,
}

impl SolutionFile {
    pub fn new(r: &Realization, cert: &RiccatiCertificate, sol: &SolutionBundle, supnorm: f64) -> Self {
        Self {
            schema: SOLUTION_SCHEMA.to_string(),
            version: VERSION,
            dims: r.dims(),
            x: RealizationRecord::new(&sol.x),
            u: RealizationRecord::new(&sol.u),
            v: RealizationRecord::new(&sol.v),
            entropy: sol.entropy,
            supnorm,
            certificate: CertificateRecord::new(cert),
        }
    }
}

pub fn read_solution_file(path: &Path) -> Result<SolutionFile> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| json_error(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub omega: f64,
    pub norm_x: f64,
    pub min_eig_defect: f64,
    pub interp_residual: f64,
}

/// Rows over the uniform grid `2 pi k / points`.
pub fn sweep(r: &Realization, x: &TransferFunction, points: usize) -> Result<Vec<SweepRow>> {
    let (g, k) = (r.g(), r.k());
    let q = x.cols();
    linalg::uniform_grid(points)
        .into_iter()
        .map(|omega| {
            let z = linalg::circle(omega);
            let xz = x.eval(z)?;
            let defect = linalg::eye(q) - xz.adjoint() * &xz;
            Ok(SweepRow {
                omega,
                norm_x: linalg::norm2(&xz),
                min_eig_defect: linalg::min_eig(&defect),
                interp_residual: linalg::fnorm(&(g.eval(z)? * &xz - k.eval(z)?)),
            })
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "omega,norm_x,min_eig_defect,interp_residual";

pub fn write_sweep<W: Write>(out: &mut W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for row in rows {
        writeln!(out, "{:?},{:?},{:?},{:?}", row.omega, row.norm_x, row.min_eig_defect, row.interp_residual)?;
    }
    Ok(())
}
