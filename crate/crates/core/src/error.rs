use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The simplex method could not make numerically safe progress.
    #[error("numerical breakdown in LP solver: {0}")]
    NumericalBreakdown(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("variable {0} is fixed both to zero and to one")]
    ConflictingFix(usize),

    #[error("piercing cut requires a non-empty bucket")]
    EmptyBucket,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("restricted problem still infeasible after kernel expansion")]
    StillInfeasible,

    #[error("kernel search found no feasible solution")]
    NoSolution,

    #[error("instance generation stalled after {0} attempts")]
    GenerationStalled(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
