use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown split `{0}`")]
    UnknownSplit(String),

    #[error("duplicate sentence id `{0}`")]
    DuplicateSentence(String),

    #[error("entity type `{0}` is not in the declared label set")]
    UnknownEntityType(String),

    #[error("invalid spans: {0}")]
    InvalidSpans(String),

    #[error("instance `{id}` has combined length {len}, exceeding the maximum of {max}")]
    InstanceTooLong { id: String, len: usize, max: usize },

    #[error("sample plan: {0}")]
    Sample(String),

    #[error("instance `{0}` has no supervised positions")]
    NoSupervision(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("model config: {0}")]
    ModelConfig(String),

    #[error("representation file: {0}")]
    Representation(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("prediction for unknown sentence `{0}`")]
    UnknownSentence(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }
}
