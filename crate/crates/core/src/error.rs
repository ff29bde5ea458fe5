//! Crate-wide error type with stable machine-readable codes.

use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("record `{id}` (line {line}): expected {expected} components, found {actual}")]
    DimMismatch {
        id: String,
        line: usize,
        expected: usize,
        actual: usize,
    },

    #[error("duplicate id `{id}`{}", line_suffix(*line))]
    DuplicateId { id: String, line: Option<usize> },

    #[error("record `{id}` (line {line}): component {index} is not finite")]
    NonFinite {
        id: String,
        line: usize,
        index: usize,
    },

    #[error("{0}")]
    Validation(String),

    #[error("{what} not found: {}", ids.join(", "))]
    NotFound {
        what: &'static str,
        ids: Vec<String>,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Attach the file an error originated from. Already-attributed errors are
    /// returned unchanged.
    pub fn in_file(self, path: impl AsRef<Path>) -> Self {
        match self {
            e @ (Error::InFile { .. } | Error::Io { .. }) => e,
            e => Error::InFile {
                path: path.as_ref().to_path_buf(),
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, skipping file context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::InFile { source, .. } => source.root(),
            e => e,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self.root() {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::DuplicateId { .. } => "duplicate_id",
            Error::NonFinite { .. } => "non_finite",
            Error::Validation(_) => "validation",
            Error::NotFound { .. } => "not_found",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Degenerate(_) => "degenerate",
            Error::InsufficientData(_) => "insufficient_data",
            Error::ZeroVariance(_) => "zero_variance",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::InFile { .. } => unreachable!(),
        }
    }

    /// Process exit status for the error category.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Io { .. } => 3,
            Error::Parse { .. } => 4,
            Error::DimMismatch { .. }
            | Error::DuplicateId { .. }
            | Error::NonFinite { .. }
            | Error::Validation(_) => 5,
            Error::NotFound { .. } => 6,
            _ => 7,
        }
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io {
            path: PathBuf::new(),
            source: io,
        },
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}
