use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible design: {constraint} violated by {slack:.3e}")]
    Feasibility { constraint: String, slack: f64 },

    #[error("zero-forcing infeasible: {0}")]
    ZfInfeasible(String),

    #[error("optimizer needs at least one feasible initial design")]
    OptimizerInit,

    #[error("exhaustive order enumeration limited to K <= 4 users (got K = {0}); sample orders instead")]
    TooLarge(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
