use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum KsError {
    /// Invalid configuration or invalid arguments to a constructor.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical failure: solver non-convergence, NaN/Inf, positivity loss.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Precondition violation on an operation's input.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KsError>;
