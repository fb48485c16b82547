use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A fatal problem tied to a specific record of an input file.
    #[error("{path}:{line}: {msg}")]
    Record {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A precondition or invariant violation.
    #[error("{0}")]
    Invalid(String),

    #[error("feature dimension mismatch: model expects {expected}, vector has {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported schema version {found}, expected {expected}")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("model was trained against a different feature space (model fingerprint {expected}, featurizer {got})")]
    FeatureSpaceMismatch { expected: String, got: String },

    #[error("failed to decode model: {0}")]
    Decode(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn record(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Record {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
