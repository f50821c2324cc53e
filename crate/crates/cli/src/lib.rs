//! Command-line pipeline around the `fairij` library: configuration,
//! per-trial orchestration and artifact emission.

pub mod commands;
pub mod config;
pub mod pipeline;

use fairij::Error;

/// Process exit code for an error: 1 for input, configuration and IO
/// problems, 2 for numerical failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::TrainingDiverged { .. }
        | Error::NumericalBreakdown { .. }
        | Error::Divergence { .. }
        | Error::NotConverged { .. }
        | Error::Solve(_) => 2,
        Error::Input(_)
        | Error::Schema(_)
        | Error::Config(_)
        | Error::Evaluation(_)
        | Error::Capacity { .. }
        | Error::Io { .. }
        | Error::Format { .. } => 1,
    }
}
