use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImpError {
    #[error("matrix is not symmetric: max |A - A^T| = {asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is zero to within rank tolerance {rank_tol:e}; smallest non-zero eigenvalue undefined")]
    NoNonzeroEigenvalue { rank_tol: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infinite horizon has no time-stepping solution; use the closed form")]
    InfiniteHorizon,

    #[error("iterate norm {norm:e} after {iters} iterations: step size too large for spectrum")]
    Diverged { iters: usize, norm: f64 },
}

pub type Result<T> = std::result::Result<T, ImpError>;
