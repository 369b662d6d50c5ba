//! Error type shared across the library.

use std::fmt;

#[derive(Debug)]
pub enum Error {
    /// Element-wise operands or chained layers disagree on tensor shape.
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },
    /// Channel count of an input does not match the parameter it is applied with.
    ChannelMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// Shift offset magnitude reaches or exceeds the spatial extent.
    ShiftOutOfRange {
        dy: i32,
        dx: i32,
        h: usize,
        w: usize,
    },
    /// Kernel windows must be odd so the center tap is well-defined.
    EvenKernelSize(usize),
    /// Index outside a valid range (batch index, offset index, ...).
    IndexOutOfRange { index: usize, len: usize },
    /// Parameter values violate a construction invariant.
    InvalidParam(String),
    /// A block configuration cannot be merged into a single operator.
    NotReparameterizable(String),
    /// A fixture or bundle file is malformed.
    Format(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch {
                context,
                expected,
                got,
            } => write!(f, "{context}: shape mismatch, expected {expected}, got {got}"),
            Error::ChannelMismatch {
                context,
                expected,
                got,
            } => write!(f, "{context}: channel mismatch, expected {expected}, got {got}"),
            Error::ShiftOutOfRange { dy, dx, h, w } => write!(
                f,
                "shift offset ({dy},{dx}) out of range for {h}x{w} spatial extent"
            ),
            Error::EvenKernelSize(k) => write!(f, "kernel size {k} must be odd"),
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::InvalidParam(msg) => write!(f, "invalid parameter: {msg}"),
            Error::NotReparameterizable(msg) => write!(f, "cannot re-parameterize: {msg}"),
            Error::Format(msg) => write!(f, "malformed file: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
