use std::path::PathBuf;

use thiserror::Error;

/// Ways a binary or text artifact can fail to parse.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },
    #[error("length mismatch: expected {expected} bytes, found {found}")]
    Length { expected: u64, found: u64 },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("misaligned inputs: {0}")]
    Alignment(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("missing inputs: {}", display_paths(.0))]
    Missing(Vec<PathBuf>),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numeric procedures themselves (divergence,
    /// degenerate geometry) as opposed to bad inputs or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Training(_) | Error::Degenerate(_) | Error::State(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
