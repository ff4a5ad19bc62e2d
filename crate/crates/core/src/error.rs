use thiserror::Error;

/// Errors from constructing or combining parameter matrices.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("invalid block spec: {0}")]
    InvalidSpec(String),
    #[error("block {block} is not symmetric")]
    NotSymmetric { block: usize },
    #[error("block structure mismatch: expected {expected:?}, found {found:?}")]
    SpecMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("invalid cone for block {block}: {reason}")]
    InvalidCone { block: usize, reason: String },
    #[error("eigendecomposition of block {block} did not converge")]
    EigenFailure { block: usize },
    #[error("vector has length {found}, parameter space needs {expected}")]
    LengthMismatch { expected: usize, found: usize },
}
