use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("reward error: {0}")]
    Reward(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch} ({cycle}): {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        cycle: String,
        detail: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("missing artifacts in {dir}: {missing:?}")]
    MissingArtifacts { dir: PathBuf, missing: Vec<String> },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::InvalidShape(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Short machine-parseable tag used by the CLI's single-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidShape(_) => "invalid-shape",
            Error::InvalidLabel(_) => "invalid-label",
            Error::Contract(_) => "contract",
            Error::Parse { .. } => "parse",
            Error::EmptyDataset(_) => "empty-dataset",
            Error::Reward(_) => "reward",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::MissingArtifacts { .. } => "missing-artifacts",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }
}
