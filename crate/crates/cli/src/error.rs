use std::fmt;

use costate_core::Error;

/// Failure classes, each mapped to a process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    NonConvergence(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::NonConvergence(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Argument(_) => CliError::Usage(msg),
            Error::Divergence(_) | Error::NonConvergence(_) => CliError::NonConvergence(msg),
            // Malformed input files count as I/O failures, not bad flags.
            Error::Parse { .. } | Error::Version { .. } | Error::Io(_) => CliError::Io(msg),
        }
    }
}
