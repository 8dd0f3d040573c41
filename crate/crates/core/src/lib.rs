pub mod equations;
pub mod error;
pub mod generate;
pub mod io;
pub mod linalg;
pub mod realization;
pub mod synthesis;
pub mod toeplitz;
pub mod verification;

pub use equations::{compute_problem_data, solve_dare_stabilizing, DareOptions, ProblemData, RiccatiCertificate};
pub use error::{Error, Result};
pub use generate::{construct_instance, generate_instance, GeneratedInstance};
pub use realization::{Dimensions, Realization, TransferFunction};
pub use synthesis::{synthesize, SolutionBundle};
pub use verification::{run_identity_suite, run_operator_suite, Tolerances, VerificationReport};
