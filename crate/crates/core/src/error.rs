use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at index {index}: expected {expected}, found {found}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite entry at coordinate {coordinate}")]
    NonFinite { coordinate: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("insufficient buffer: {rows} row(s), need at least 2")]
    InsufficientBuffer { rows: usize },

    #[error("too few clients: n = {n} with f = {f} (need n >= {required})")]
    TooFewClients { n: usize, f: usize, required: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
