use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    /// The file decoded but does not have the expected pixel layout.
    #[error("{path}: unsupported image format: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("sequence of {len} frames is too short (need at least {min})")]
    SequenceTooShort { len: usize, min: usize },

    #[error("frame has no valid depth pixels")]
    NoValidPixels,

    #[error("no jointly valid pixels to compare")]
    NoJointlyValidPixels,

    #[error("registered color has no covered pixels to interpolate from")]
    NoCoverage,

    #[error("non-positive depth {0} mm")]
    NonPositiveDepth(f64),

    #[error("weight undefined for coincident pixels")]
    CoincidentPixels,

    #[error("image of {width}x{height} is smaller than one {block}x{block} block")]
    TooSmall {
        width: usize,
        height: usize,
        block: usize,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
