use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("symmetric eigensolver failed to converge for a {dim}x{dim} matrix")]
    EigenSolver { dim: usize },

    #[error("scalar function undefined at eigenvalue {value}: {reason}")]
    Domain { value: f64, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("refinement ratio {ratio} does not divide step count {steps}")]
    Refinement { ratio: usize, steps: usize },

    #[error("implicit solve did not converge after {iterations} iterations (last change {last_change:e})")]
    ImplicitSolve { iterations: usize, last_change: f64 },

    #[error("could not bracket the implicit root for x = {x} after {expansions} expansions")]
    Bracket { x: f64, expansions: usize },

    #[error("state became non-finite (largest entry {max_abs})")]
    NonFinite { max_abs: f64 },

    #[error("step {index} failed: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of the numerics (as opposed to misconfiguration).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::EigenSolver { .. }
            | Error::Domain { .. }
            | Error::ImplicitSolve { .. }
            | Error::Bracket { .. }
            | Error::NonFinite { .. } => true,
            Error::Step { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn at_step(self, index: usize) -> Self {
        Error::Step {
            index,
            source: Box::new(self),
        }
    }
}
