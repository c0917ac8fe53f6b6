use thiserror::Error;

/// Errors raised by the solvers and validators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("no convergence in {context} after {iterations} iterations (gap {gap:.3e})")]
    NonConvergence {
        context: &'static str,
        iterations: usize,
        gap: f64,
    },
    #[error("index {index} out of range for alphabet of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("degenerate dispersion")]
    DegenerateDispersion,
    #[error("degenerate dispersion matrix")]
    DegenerateMatrix,
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{count} compositions exceed the cap of {cap}; use Monte Carlo mode")]
    CapExceeded { count: u128, cap: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;
