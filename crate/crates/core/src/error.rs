use std::io;

use thiserror::Error;

/// Errors produced anywhere in the depth-estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or image extents do not fit the requested operation.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// An argument violates an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Geometry that cannot be evaluated (singular homography, point behind camera, ...).
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    /// A file did not follow its expected layout.
    #[error("malformed {kind} data: {msg}")]
    Format { kind: &'static str, msg: String },
    /// A computation produced NaN or infinity.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// Training produced a non-finite loss.
    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(kind: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            kind,
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad inputs rather than by a failing computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Shape(_) | Error::InvalidArgument(_) | Error::Format { .. } | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
