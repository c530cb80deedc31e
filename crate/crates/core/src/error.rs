use std::path::PathBuf;

/// Errors produced across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes do not fit together. `op` names the kernel, `detail` the offending axes.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A call violated an operation's precondition (e.g. backward from an inference cache).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "unrealizable detection ladder {requested:?}: {reason}; achievable ladders: {achievable:?}"
    )]
    Ladder {
        requested: Vec<usize>,
        reason: String,
        achievable: Vec<Vec<usize>>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// A data file could not be decoded.
    #[error("corrupt data file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    /// Checksum or digest mismatch.
    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("invalid sample: {0}")]
    Sample(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

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
}
