//! Command implementations behind the `leech` binary.
//!
//! Exit codes: 0 success, 1 any error (including usage errors and failed
//! verification), 2 the problem is not strictly positive.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use leech_core::io::{self, ProblemFile, SolutionFile};
use leech_core::synthesis::supnorm_estimate;
use leech_core::{
    compute_problem_data, construct_instance, generate_instance, run_identity_suite, run_operator_suite,
    solve_dare_stabilizing, synthesize, DareOptions, Dimensions, Error, Realization, Tolerances,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_POSITIVE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "leech", version, about = "Maximum entropy solutions of rational Leech problems G X = K")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve a problem file and write the solution realizations.
    Solve(SolveArgs),
    /// Run the identity and operator suites and write a report.
    Verify(VerifyArgs),
    /// Write a seeded random problem file.
    Generate(GenerateArgs),
    /// Tabulate |X|, min eig(I - X*X) and |G X - K| on the unit circle.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Finite-section size for the Riccati start (default: automatic).
    #[arg(long)]
    pub sections: Option<usize>,
    /// Multiply all numerical tolerances by this factor.
    #[arg(long, default_value_t = 1.0)]
    pub tol_scale: f64,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Grid points for the sup-norm estimate.
    #[arg(long, default_value_t = 1024)]
    pub grid: usize,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Report file; printed to standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Section size for the operator suite.
    #[arg(long = "oracle-sections", default_value_t = 64)]
    pub oracle_sections: usize,
    /// Circle grid for residual checks.
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// n,m,p,q with n the order of G and of X0.
    #[arg(long, value_parser = parse_dims)]
    pub dims: Dimensions,
    #[arg(long, default_value_t = 0.7)]
    pub radius: f64,
    /// Accept radius >= 1, producing instances without a contractive solution.
    #[arg(long)]
    pub allow_infeasible: bool,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    /// CSV file; printed to standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
}

pub fn parse_dims(s: &str) -> Result<Dimensions, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [n, m, p, q] => Ok(Dimensions { n, m, p, q }),
        _ => Err(format!("expected n,m,p,q, got {} values", parts.len())),
    }
}

/// Failure of a command, carrying the exit code.
#[derive(Debug)]
pub enum Failure {
    NotPositive(String),
    Error(String),
    Unverified(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::NotPositive(_) => EXIT_NOT_POSITIVE,
            Failure::Error(_) | Failure::Unverified(_) => EXIT_ERROR,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotStrictlyPositive(d) => Failure::NotPositive(format!(
                "not strictly positive: {} (value {:e})",
                d.condition.describe(),
                d.value
            )),
            other => Failure::Error(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.to_string())
    }
}

struct Pipeline {
    r: Realization,
    pd: leech_core::ProblemData,
    cert: leech_core::RiccatiCertificate,
    sol: leech_core::SolutionBundle,
}

fn run_pipeline(args: &SolverArgs) -> Result<Pipeline, Failure> {
    let r = io::load_problem(&args.input)?;
    eprintln!("loaded {} ({})", args.input.display(), r.dims());
    let pd = compute_problem_data(&r)?;
    let mut opts = DareOptions::default().scaled(args.tol_scale);
    opts.sections = args.sections;
    let cert = solve_dare_stabilizing(&r, &pd, &opts)?;
    eprintln!(
        "riccati: {} sections, {} newton steps, residual {:.3e}",
        cert.sections_used, cert.newton_iterations, cert.riccati_residual
    );
    let sol = synthesize(&r, &pd, &cert)?;
    Ok(Pipeline { r, pd, cert, sol })
}

fn emit(output: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match output {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn cmd_solve(args: &SolveArgs) -> Result<(), Failure> {
    let p = run_pipeline(&args.solver)?;
    let sup = supnorm_estimate(&p.sol.x, args.grid.max(3), 40)?;
    println!("entropy {}", p.sol.entropy);
    println!("supnorm {} (at omega = {}, grid {})", sup.value, sup.omega, sup.grid_points);
    if let Some(path) = &args.output {
        io::save_json(path, &SolutionFile::new(&p.r, &p.cert, &p.sol, sup.value))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let p = run_pipeline(&args.solver)?;
    let tol = Tolerances { residual_grid: args.grid, ..Tolerances::default().scaled(args.solver.tol_scale) };
    let mut report = run_identity_suite(&p.r, &p.pd, &p.cert, &p.sol, &tol);
    report.merge(run_operator_suite(&p.r, &p.pd, &p.cert, &p.sol, args.oracle_sections, &tol)?);
    report.fingerprint.seed = io::read_problem_file(&args.solver.input)?.metadata.seed;
    emit(&args.output, &io::to_json(&report))?;
    for c in &report.checks {
        let status = if c.pass { "ok" } else if c.mandatory { "FAIL" } else { "info" };
        eprintln!("{status:4} {:28} {:.3e} <= {:.3e}", c.name, c.residual, c.tolerance);
    }
    if report.pass {
        eprintln!("all mandatory checks passed");
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(Failure::Unverified(format!("failed checks: {}", names.join(", "))))
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), Failure> {
    let inst = if args.allow_infeasible {
        construct_instance(args.seed, args.dims, args.radius)?
    } else {
        generate_instance(args.seed, args.dims, args.radius)?
    };
    io::save_problem(&args.output, &ProblemFile::from_generated(&inst))?;
    eprintln!("wrote {} ({})", args.output.display(), inst.realization.dims());
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let p = run_pipeline(&args.solver)?;
    let rows = io::sweep(&p.r, &p.sol.x, args.grid.max(1))?;
    let mut buf = Vec::new();
    io::write_sweep(&mut buf, &rows)?;
    emit(&args.output, &String::from_utf8(buf).expect("ascii csv"))
}

pub fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            match &f {
                Failure::NotPositive(m) | Failure::Error(m) | Failure::Unverified(m) => eprintln!("leech: {m}"),
            }
            f.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_parse() {
        assert_eq!(parse_dims("2,1,1,3").unwrap(), Dimensions { n: 2, m: 1, p: 1, q: 3 });
        assert!(parse_dims("1,2").is_err());
        assert!(parse_dims("a,1,1,1").is_err());
    }

    #[test]
    fn usage_error_is_not_exit_two() {
        assert_eq!(run(["leech", "solve"]), EXIT_ERROR);
        assert_eq!(run(["leech", "bogus"]), EXIT_ERROR);
        assert_eq!(run(["leech", "--help"]), EXIT_OK);
    }
}
