//! Error types shared by every module in the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or matrix shapes do not line up; the message names both shapes.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A parameter is outside its accepted range (dilation, window, class count, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A NaN or infinity was produced or consumed by an operation.
    #[error("non-finite value in {op}")]
    NonFinite { op: &'static str },

    /// A class label is outside [0, classes).
    #[error("label {value} at index {index} outside [0, {classes})")]
    Label {
        index: usize,
        value: usize,
        classes: usize,
    },

    /// An API precondition was violated (empty input, non-scalar loss, mismatched T, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Bad magic bytes or unsupported version in a binary file.
    #[error("format error: {0}")]
    Format(String),

    /// A file is structurally valid but its payload is truncated or inconsistent.
    #[error("corrupt file: {0}")]
    Corrupt(String),

    /// Modalities of one video do not share a compatible frame axis.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    /// A dataset entry is unusable; names the offending video.
    #[error("data error for video '{video_id}': {reason}")]
    Data { video_id: String, reason: String },

    /// Gold ids without a matching prediction (or the other way round).
    #[error("coverage error: missing ids: {}", missing.join(", "))]
    Coverage { missing: Vec<String> },
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
