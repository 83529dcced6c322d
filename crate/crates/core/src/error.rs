use std::fmt;

use thiserror::Error;

use crate::netmodel::Side;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("Hermitian eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    ConvergenceFailure { sweeps: usize, residual: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("projected covariance is numerically singular (condition number {condition:e})")]
    SingularProjection { condition: f64 },

    #[error("power allocation is infeasible: {0}")]
    InfeasibleAllocation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("distance {distance} m is below the minimum distance {min_distance} m")]
    BelowMinDistance { distance: f64, min_distance: f64 },

    #[error("user placement exceeded the rejection budget of {attempts} draws")]
    RejectionBudgetExceeded { attempts: usize },

    #[error("{source} (node {node}, {phase} phase, iteration {iteration})")]
    Solver {
        node: usize,
        phase: Phase,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which half of a forward-backward round produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Forward,
    Backward,
    Init,
}

impl From<Side> for Phase {
    fn from(side: Side) -> Self {
        match side {
            Side::Forward => Phase::Forward,
            Side::Reverse => Phase::Backward,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Forward => "forward",
            Phase::Backward => "backward",
            Phase::Init => "init",
        })
    }
}

impl Error {
    pub(crate) fn at(self, node: usize, phase: Phase, iteration: usize) -> Self {
        Error::Solver {
            node,
            phase,
            iteration,
            source: Box::new(self),
        }
    }
}
