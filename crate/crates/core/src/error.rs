use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed PPM header: {0}")]
    PpmHeader(String),

    #[error("truncated PPM payload: expected {expected} bytes, found {found}")]
    PpmTruncated { expected: usize, found: usize },

    #[error("unsupported PPM maxval {0} (only 255 is accepted)")]
    PpmMaxval(u32),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("zero-norm vector in {0}")]
    ZeroNorm(&'static str),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("history has {have} entries, window needs {need}")]
    InsufficientHistory { have: usize, need: usize },

    #[error("unknown embedder kind `{0}`")]
    UnknownKind(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("malformed weight file: {0}")]
    WeightFormat(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
