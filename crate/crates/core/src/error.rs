use std::fmt;
use std::path::PathBuf;

/// Location inside an input file where parsing failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offset {
    /// 1-based line number (text formats).
    Line(usize),
    /// Byte offset from the start of the file (binary formats).
    Byte(u64),
}

impl fmt::Display for Offset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Offset::Line(n) => write!(f, "line {n}"),
            Offset::Byte(n) => write!(f, "byte {n}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error at {offset}: {message}")]
    Format { offset: Offset, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate scores: {0}")]
    DegenerateScores(String),

    #[error("score cache error: {0}")]
    Cache(String),

    #[error("mixing error: {0}")]
    Mixing(String),

    #[error("brute-force guard: size {size} exceeds limit {limit}")]
    Guard { size: usize, limit: usize },
}

impl Error {
    pub(crate) fn format(offset: Offset, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn param(message: impl Into<String>) -> Self {
        Error::Param(message.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a path to a format error so messages point at the offending file.
    pub fn in_file(self, path: &std::path::Path) -> Self {
        match self {
            Error::Format { offset, message } => Error::Format {
                offset,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
