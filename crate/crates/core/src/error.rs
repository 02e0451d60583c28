use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset contains no observed events")]
    NoEvents,

    #[error("degenerate partial likelihood: {0}")]
    DegenerateLikelihood(String),

    #[error("information matrix is singular; column `{column}` is not identifiable")]
    RankDeficient { column: String },

    #[error("matrix is not positive definite (failing pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("all change-point fits failed: {0}")]
    FitFailure(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
