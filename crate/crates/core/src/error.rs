use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("finite-difference oracle: {0}")]
    Oracle(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("label error: {0}")]
    Label(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("missingness injection error: {0}")]
    Injection(String),

    #[error("missingness mechanism error: {0}")]
    Mechanism(String),

    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown operator `{token}` at position {pos}")]
    UnknownOperator { token: String, pos: usize },

    #[error("selection error: {0}")]
    Selection(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
