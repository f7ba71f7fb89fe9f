use thiserror::Error;

/// Errors raised by construction checks and by the time-stepping solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field has {got} values but the grid has {expected} nodes")]
    FieldLength { expected: usize, got: usize },

    #[error("invalid problem data: {0}")]
    InvalidProblem(String),

    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),

    #[error("{what} called outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("nonlinear iteration diverged at t = {t} after {iterations} iterations (residual {residual:e})")]
    PicardDivergence {
        t: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("tridiagonal solve failed at t = {t}: pivot {pivot:e} in row {row}")]
    LinearSolveFailure { t: f64, row: usize, pivot: f64 },

    #[error("no steady state reached by t = {t_max} (residual {residual:e} > {tol:e})")]
    NoSteadyState { t_max: f64, residual: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
