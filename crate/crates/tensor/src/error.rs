use thiserror::Error;

use crate::Shape;

/// Errors raised by tensor construction, graph ops and parameter bookkeeping.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape} ({expected} elements)")]
    DataLength { shape: Shape, len: usize, expected: usize },

    #[error("{op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{op}: output size would be non-positive ({detail})")]
    EmptyOutput { op: &'static str, detail: String },

    #[error("{op}: invalid argument: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("{op} produced a non-finite value at flat index {index}")]
    NonFinite { op: &'static str, index: usize },

    #[error("backward requires a scalar loss, got shape {0}")]
    NonScalarLoss(Shape),

    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
