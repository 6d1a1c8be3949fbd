use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum McError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("root solver failed at index {index}: {message}")]
    Solver { index: usize, message: String },

    #[error("homogenization invalid: {0}")]
    Homogenization(String),

    #[error("requested accuracy not reached: {0}")]
    Accuracy(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, McError>;
