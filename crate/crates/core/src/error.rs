use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("arm index {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },

    #[error("invalid bandit instance: {0}")]
    InvalidInstance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The improper Gaussian prior only yields a proper posterior once every
    /// arm has been observed at least once.
    #[error("posterior of arm {arm} is improper (no observations yet)")]
    ImproperPosterior { arm: usize },

    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: &'static str, detail: String },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("replication {replication}: {source}")]
    Replication {
        replication: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o: {0}")]
    Io(#[from] io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numerical(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            detail: detail.into(),
        }
    }

    /// True for failures that originate in a numerical routine rather than
    /// in the caller's input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical { .. } => true,
            Error::Replication { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// True for invalid configurations, instances and arguments.
    pub fn is_config(&self) -> bool {
        match self {
            Error::ArmOutOfRange { .. }
            | Error::InvalidInstance(_)
            | Error::InvalidArgument(_)
            | Error::Precondition(_)
            | Error::ImproperPosterior { .. }
            | Error::Json(_) => true,
            Error::Replication { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
