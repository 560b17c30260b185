use thiserror::Error;

use crate::dual::DualSolution;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid observable set: {0}")]
    InvalidObservableSet(String),

    #[error("tilt {0:?} lies outside the domain of the log-partition function")]
    Domain(Vec<f64>),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("moment integral diverges: {0}")]
    MomentDivergence(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// The reduced (zero last tilt) dual problem has no solution.
    #[error("reduced moment problem is infeasible: {0}")]
    Infeasible(String),

    /// The full dual problem has no solution with a strictly negative last tilt.
    #[error("no full tilt with negative last coordinate matches the targets: {0}")]
    NoFullTilt(String),

    #[error("Newton solver stalled after {iterations} iterations (residual {residual:e})")]
    SolverStall { iterations: usize, residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("targets {0:?} are not admissible")]
    Inadmissible(Vec<f64>),

    #[error("phase classification inconclusive: {reason}")]
    ClassificationInconclusive {
        reason: String,
        reduced: Option<Box<DualSolution>>,
        full: Option<Box<DualSolution>>,
    },

    #[error("could not construct a point inside the constraint shell: {0}")]
    Feasibility(String),

    #[error("chain failed to mix: acceptance rate {acceptance:e} after adaptation (step {step:e})")]
    MixingFailure { acceptance: f64, step: f64 },

    #[error("constraint shell has no grid cell inside it")]
    EmptyShell,

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidObservableSet(_)
                | Error::Argument(_)
                | Error::Config(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
