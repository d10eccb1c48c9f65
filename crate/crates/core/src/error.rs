use thiserror::Error;

/// Errors raised by the operator kernel and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian: max |H - H^*| = {deviation:e}")]
    NotHermitian { deviation: f64 },

    #[error("operator is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("{what} must be positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { what: &'static str, min_eigenvalue: f64 },

    #[error("cannot take the logarithm of nonpositive eigenvalue {eigenvalue:e}")]
    NonPositiveLog { eigenvalue: f64 },

    #[error("eigensolver did not converge")]
    Eigensolver,

    #[error("parameter {name} must be positive and finite, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("marginal masses differ: {mass1} vs {mass2}")]
    TraceMismatch { mass1: f64, mass2: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_parameter(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter { name, value })
    }
}
