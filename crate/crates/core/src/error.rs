use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("integration produced a non-finite value")]
    NonFiniteIntegration,

    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("solver callback returned a non-finite value ({0})")]
    NonFiniteCallback(&'static str),

    #[error("controller fault: {0}")]
    ControllerFault(String),

    #[error("initial problem is infeasible: {0}")]
    InitialInfeasible(String),

    #[error("planner input error: {0}")]
    Planner(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
