use std::path::PathBuf;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient history: need {needed} lagged values, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("truncated gamma on [{lower}, {upper}] has negligible mass {mass:e}")]
    DegenerateTruncation { lower: f64, upper: f64, mass: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("numerical failure at iteration {iteration}: {message}")]
    ChainFault { iteration: usize, message: String },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::InvalidParameter(_) => 1,
            Error::Parse { .. } | Error::Data(_) | Error::Io { .. } => 2,
            Error::InsufficientHistory { .. }
            | Error::DegenerateTruncation { .. }
            | Error::Numerical(_)
            | Error::ChainFault { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
