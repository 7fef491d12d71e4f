use std::io;

use thiserror::Error;

/// Errors produced by the solvers, builders and parsers in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("index {index} out of range for {len} blocks")]
    Index { index: usize, len: usize },
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("infeasible point: {0}")]
    Feasibility(String),
    #[error("numerical failure: {0}")]
    Numerics(String),
    #[error("subproblem unbounded below: {0}")]
    Unbounded(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("reduction failed: {0}")]
    Reduction(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("engine failure: {0}")]
    Engine(String),
    #[error("stop rule not reached within {0:.3} s of wall time")]
    MaxWallTime(f64),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures caused by bad inputs or settings rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Dimension(_)
                | Error::Index { .. }
                | Error::Topology(_)
                | Error::Parse { .. }
                | Error::Reduction(_)
        )
    }

    /// True for numerical breakdowns (NaN, drift, unbounded subproblems, infeasibility).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numerics(_) | Error::Unbounded(_) | Error::Feasibility(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
