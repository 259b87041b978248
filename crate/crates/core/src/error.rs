//! Error type shared by every module in the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CoreError>;

/// Errors produced by matrix construction, attention kernels, clustering and
/// scoring routines.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("matrix dimensions must be non-zero, got {rows} x {cols}")]
    EmptyDimension { rows: usize, cols: usize },

    #[error("data length mismatch: expected {expected}, got {got}")]
    DataLength { expected: usize, got: usize },

    #[error("{op}: incompatible shapes {0}x{1} and {2}x{3}", left.0, left.1, right.0, right.1)]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("row {row} has zero norm and cannot be normalized")]
    DegenerateRow { row: usize },

    #[error("{op}: length mismatch, {left} vs {right}")]
    LengthMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("Gram matrix is numerically singular (condition estimate {cond:.3e} exceeds cap {cap:.3e})")]
    SingularGram { cond: f64, cap: f64 },

    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },

    #[error("estimated row sum for query {row} is zero; increase residual_samples")]
    ZeroRowSum { row: usize },

    #[error("empty-cluster repair exhausted after {attempts} consecutive reseeds")]
    EmptyClusterRepair { attempts: usize },

    #[error("invalid parameter {param}: {message}")]
    InvalidParameter {
        param: &'static str,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("matrix file format error: {0}")]
    Format(String),
}

impl CoreError {
    pub(crate) fn invalid(param: &'static str, message: impl Into<String>) -> Self {
        CoreError::InvalidParameter {
            param,
            message: message.into(),
        }
    }
}
