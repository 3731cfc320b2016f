use thiserror::Error;

/// Errors produced across the toolkit.
///
/// The variants map one-to-one onto the CLI exit-code contract: format
/// problems exit with 2, capacity violations with 3 and numerical failures
/// with 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs that are well-formed but semantically invalid (mismatched
    /// universes, overlapping teams, non-partitions, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An explicit size guard was exceeded.
    #[error("capacity error: {what} is {actual}, limit is {limit}")]
    Capacity {
        what: String,
        actual: u64,
        limit: u64,
    },

    /// Malformed input files.
    #[error("format error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format { line: Option<u64>, message: String },

    /// A fit or solve produced a non-finite value.
    #[error("numerical failure{}: {message}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    Numerical { epoch: Option<usize>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn capacity(what: impl Into<String>, actual: u64, limit: u64) -> Self {
        Error::Capacity {
            what: what.into(),
            actual,
            limit,
        }
    }

    pub(crate) fn format(line: Option<u64>, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn numerical(epoch: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Numerical {
            epoch,
            message: msg.into(),
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Format { .. } => 2,
            Error::Capacity { .. } => 3,
            Error::Numerical { .. } => 4,
            Error::Io(_) => 1,
        }
    }
}

/// Fails with a capacity error when `actual > limit`.
pub(crate) fn guard(what: &str, actual: usize, limit: usize) -> Result<()> {
    if actual > limit {
        Err(Error::capacity(what, actual as u64, limit as u64))
    } else {
        Ok(())
    }
}
