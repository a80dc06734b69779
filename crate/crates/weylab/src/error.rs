//! Error taxonomy shared by the library and the CLI.
//!
//! Exit-code mapping for the CLI: configuration and domain errors exit 2,
//! infeasibility and budget errors exit 3, I/O errors exit 4.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on a mathematical argument was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value (width, precision, flag combination) is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// The request is well-formed but exceeds a resource budget
    /// (grid size, table memory, enumeration guard).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An evaluation error budget cannot be met; the message names the
    /// violated inequality.
    #[error("error budget violated: {0}")]
    Budget(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Infeasible(_) => "infeasible",
            Error::Budget(_) => "budget",
            Error::Io(_) => "io",
        }
    }

    /// CLI exit code for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Domain(_) | Error::Config(_) => 2,
            Error::Infeasible(_) | Error::Budget(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn infeasible(msg: impl Into<String>) -> Error {
    Error::Infeasible(msg.into())
}
