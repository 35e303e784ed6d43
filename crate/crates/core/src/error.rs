use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad dimensions, out-of-range parameters, or otherwise invalid input.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An integration produced non-finite values.
    #[error("integration diverged: {0}")]
    Divergence(String),

    /// An iterative solver (or a batch of them) failed to converge.
    #[error("did not converge: {0}")]
    NonConvergence(String),

    /// Malformed dataset/model/CSV file.
    #[error("parse error in {record}: {message}")]
    Parse { record: String, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: String, expected: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn parse(record: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            record: record.into(),
            message: message.into(),
        }
    }
}
