use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("matrix is not positive definite: leading minor {minor} of {dim} is not positive")]
    NotPositiveDefinite { minor: usize, dim: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Io { .. } => 3,
            Error::NotPositiveDefinite { .. } | Error::Numeric(_) | Error::Estimation(_) => 4,
        }
    }
}

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Argument(format!(
            "{what} has length {got}, expected {expected}"
        )));
    }
    Ok(())
}
