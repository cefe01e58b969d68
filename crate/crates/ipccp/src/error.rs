use thiserror::Error;

/// Errors produced by the pooling library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix entry ({row},{col}) is not symmetric: |a_ij - a_ji| = {delta:e}")]
    NotSymmetric { row: usize, col: usize, delta: f64 },

    #[error("input contains a non-finite value")]
    NonFinite,

    #[error("eigensolver failed to converge within {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("iteration diverged: |Y|_F = {norm:e} exceeds limit {limit:e}")]
    Divergence { norm: f64, limit: f64 },

    #[error("trace is zero or vanishing; feature set is degenerate")]
    ZeroTrace,

    #[error("tensor sketch output dimension {dim} is not a power of two")]
    BadDimension { dim: usize },

    #[error("transform length {len} is not a power of two")]
    BadLength { len: usize },

    #[error("sketched vectors come from different configs or wrong projection sides")]
    ConfigMismatch,

    #[error("upstream vector does not match the recorded tape")]
    TapeMismatch,
}

pub type Result<T> = std::result::Result<T, Error>;
