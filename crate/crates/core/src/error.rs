use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("message {index} out of range for an alphabet of {messages}")]
    MessageOutOfRange { index: usize, messages: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate constellation: total symbol energy below the normalization floor")]
    Degenerate,

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error("training diverged: non-finite cost at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error("all {0} training runs failed")]
    AllRunsFailed(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
