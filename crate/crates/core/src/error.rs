use thiserror::Error;

/// Errors raised by the library and the command-line front end.
///
/// Each variant maps onto one process exit code (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the requested map.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed command line or inconsistent options.
    #[error("usage error: {0}")]
    Usage(String),

    /// A requested `--check` did not hold.
    #[error("check failed: {0}")]
    Check(String),

    /// A numerical invariant that should be unreachable was violated.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    /// 0 success, 1 usage/domain, 2 check failure, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Usage(_) | Error::Csv(_) => 1,
            Error::Io(_) | Error::Json(_) => 1,
            Error::Check(_) => 2,
            Error::Internal(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
