use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's contract (mismatched lengths, empty input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown preset '{0}' (expected one of: cnn-fc, cnn-c, cnn-cnp)")]
    UnknownPreset(String),

    #[error("shape error at layer {index} ({layer}): {reason}")]
    Shape {
        index: usize,
        layer: String,
        reason: String,
    },

    #[error("degenerate mel filterbank: {0}")]
    DegenerateFilterbank(String),

    #[error("insufficient audio: need at least {required} samples ({seconds:.3} s), got {actual}")]
    InsufficientAudio {
        required: usize,
        actual: usize,
        seconds: f64,
    },

    #[error("invalid audio input: {0}")]
    Audio(String),

    #[error("quantization overflow in layer {layer}: value {value} exceeds the binary16 range")]
    QuantizationOverflow { layer: String, value: f32 },

    #[error("model integrity: {0}")]
    Integrity(#[from] IntegrityError),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Reasons a model file or a weight set fails validation.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IntegrityError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("file too short ({0} bytes)")]
    Truncated(usize),

    #[error("CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },

    #[error("malformed {section}: {reason}")]
    Malformed {
        section: &'static str,
        reason: String,
    },

    #[error("weights do not match spec: {0}")]
    ShapeMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
