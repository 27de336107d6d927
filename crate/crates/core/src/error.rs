use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shorter than one frame ({len} samples < {frame_len})")]
    InputTooShort { len: usize, frame_len: usize },

    #[error("empty frame sequence")]
    EmptyFrames,

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("mask value {value} at index {index} is outside [0, 1]")]
    MaskOutOfRange { index: usize, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown topology '{0}' (expected one of DTLN, B1, B2, B3, B4)")]
    UnknownTopology(String),

    #[error("not a weight file (bad magic bytes)")]
    NotAWeightFile,

    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),

    #[error("weight file topology '{found}' does not match expected '{expected}'")]
    TopologyMismatch { expected: String, found: String },

    #[error("shape mismatch for tensor '{tensor}': expected {expected}, found {found}")]
    TensorMismatch {
        tensor: String,
        expected: String,
        found: String,
    },

    #[error("truncated weight file")]
    Truncated,

    #[error("resampling unsupported: sample rate {0} Hz (expected 16000 Hz)")]
    UnsupportedSampleRate(u32),

    #[error("expected mono audio, found {0} channels")]
    Multichannel(u16),

    #[error("unsupported sample format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed WAV file: {0}")]
    MalformedWav(String),

    #[error("audio contains no samples")]
    EmptyAudio,

    #[error("silent {0} signal")]
    SilentSignal(&'static str),

    #[error("silent target (reference power {power:e} below threshold)")]
    SilentTarget { power: f64 },

    #[error("zero reference signal")]
    ZeroReference,

    #[error("insufficient source material: {0}")]
    InsufficientMaterial(String),

    #[error("manifest {path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("loss became NaN at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
