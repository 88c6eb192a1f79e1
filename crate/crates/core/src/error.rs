use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed PLY header at line {line} ({text:?}): {reason}")]
    PlyHeader {
        line: usize,
        text: String,
        reason: String,
    },

    #[error("PLY vertex element is missing properties: {}", .missing.join(", "))]
    PlyMissingProperties { missing: Vec<String> },

    #[error("PLY body truncated: expected {expected} bytes of vertex data, found {actual}")]
    PlyTruncated { expected: usize, actual: usize },

    #[error("camera schema error: {0}")]
    CameraSchema(String),

    #[error("camera validation error: {0}")]
    CameraValidation(String),

    #[error("non-finite depth {0} cannot be encoded in a sort key")]
    NonFiniteDepth(f32),

    #[error("pair array is not sorted: key at index {index} is smaller than its predecessor")]
    UnsortedPairs { index: usize },

    #[error("image dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (u32, u32),
        right: (u32, u32),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("image encoding failed: {0}")]
    Encode(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
