use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: non-finite loss")]
    TrainingDiverged { epoch: usize, batch: usize },

    #[error("numerical breakdown in WoodFisher recurrence at step {step}: denominator {denominator:e}")]
    NumericalBreakdown { step: usize, denominator: f64 },

    #[error("Neumann iteration diverged at step {iteration}: |u| = {norm:e}")]
    Divergence { iteration: usize, norm: f64 },

    #[error("optimization did not converge in {iterations} iterations: gradient norm {grad_norm:e}")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("parameter count {dim} exceeds the exact-Hessian cap {cap}")]
    Capacity { dim: usize, cap: usize },

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::TrainingDiverged { .. }
                | Error::NumericalBreakdown { .. }
                | Error::Divergence { .. }
                | Error::NotConverged { .. }
                | Error::Solve(_)
        )
    }
}
