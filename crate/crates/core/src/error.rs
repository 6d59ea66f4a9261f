use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("reference ATF is degenerate at bin {bin} (|A_ref| = {magnitude:e})")]
    DegenerateReference { bin: usize, magnitude: f64 },

    #[error("no transfer function available near azimuth {azimuth_deg} deg")]
    UnavailableAngle { azimuth_deg: f64 },

    #[error("matrix is not positive definite after diagonal loading")]
    SingularMatrix,

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("non-positive PSD {value:e} on masked bin {bin}")]
    InvalidPsd { bin: usize, value: f64 },

    #[error("scale undefined for channel {channel} at bin {bin}: zero remote energy in window")]
    UndefinedScale { channel: usize, bin: usize },

    #[error("empty window")]
    EmptyWindow,

    #[error("isolated noise stems are required for oracle weighting")]
    UnsupportedInLiveMode,

    #[error("sample rate mismatch: expected {expected} Hz, file has {found} Hz ({path})")]
    SampleRateMismatch {
        expected: u32,
        found: u32,
        path: PathBuf,
    },

    #[error("wav error ({path}): {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("manifest error ({path}): {message}")]
    Manifest { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
