use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Ratio of powers with a zero reference.
    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("undefined descriptor: {0}")]
    UndefinedDescriptor(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("undefined agent state: {0}")]
    UndefinedState(String),

    /// Config problems carry the 1-based line number when it is known.
    #[error("{}", format_config(.line, .message))]
    Config { line: Option<usize>, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_config(line: &Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("config error at line {l}: {message}"),
        None => format!("config error: {message}"),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
