use std::path::PathBuf;

/// Errors produced by the library.
///
/// The variants map one-to-one onto the CLI exit-code classes: I/O and
/// format problems are input failures, argument/range/data/stream/schema
/// problems are validation failures, and metric errors mean an empty or
/// degenerate evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: unsupported image format: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid pixel data: {0}")]
    Data(String),

    #[error("stream error: {0}")]
    Stream(String),

    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("metric error: {0}")]
    Metric(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Whether the error stems from reading or writing files.
    pub fn is_input_output(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. })
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::Error::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
