use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),

    #[error("empty interior: margin {margin} must be below half the shortest side ({half_side})")]
    EmptyInterior { margin: f64, half_side: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// Conjugate gradient stopped before reaching the requested tolerance.
    #[error("solver failed after {iterations} iterations, relative residual {residual:.3e}")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    /// Fine-scale schedule violates the mesh rule or the window integrality rule.
    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("infeasible design problem: {0}")]
    Infeasible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
