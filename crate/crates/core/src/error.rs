use thiserror::Error;

/// Errors produced by the simulator library.
///
/// `Config` covers everything that should have been caught before a run
/// starts (bad dimensions, inconsistent parameters, invalid files). The
/// remaining variants surface failures of individual subsystems at runtime.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("scheduler error: {0}")]
    Scheduler(String),

    #[error("accounting error: {0}")]
    Accounting(String),

    #[error("query error: {0}")]
    Query(String),

    #[error("table error: {0}")]
    Table(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("at step {step}: {source}")]
    AtStep { step: usize, source: Box<Error> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True when the error stems from invalid configuration rather than a
    /// runtime failure. The CLI maps this onto its exit codes.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parse(_) => true,
            Error::AtStep { source, .. } => source.is_config(),
            _ => false,
        }
    }

    pub fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
