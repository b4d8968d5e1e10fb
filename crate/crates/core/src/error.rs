use thiserror::Error;

use crate::solvers::SolverReport;
use crate::tensor::CMatrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Diagnostics attached to an iterative routine that gave up.
#[derive(Debug, Clone)]
pub struct IterationFailure {
    pub iterations: usize,
    /// Last value of the routine's own stopping quantity.
    pub residual: f64,
    /// Best iterate available when the routine stopped.
    pub last_iterate: CMatrix,
    /// Solver trace, when the failing routine is one of the estimators.
    pub report: Option<SolverReport>,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    SingularMatrix { min_eigenvalue: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {} iterations (residual {:e})", .0.iterations, .0.residual)]
    Convergence(Box<IterationFailure>),

    #[error("step search stalled after {} iterations", .0.iterations)]
    StalledStep(Box<IterationFailure>),
}

impl Error {
    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Iteration diagnostics for [`Error::Convergence`] and [`Error::StalledStep`].
    pub fn failure(&self) -> Option<&IterationFailure> {
        match self {
            Error::Convergence(f) | Error::StalledStep(f) => Some(f),
            _ => None,
        }
    }
}
