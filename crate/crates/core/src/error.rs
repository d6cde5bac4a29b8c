use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("registry error: {0}")]
    Registry(String),

    #[error("unregistered mode `{0}`")]
    UnknownMode(String),

    #[error("unregistered memory `{0}`")]
    UnknownMemory(String),

    #[error("photon number {found} exceeds max_photons = {limit}")]
    Truncation { found: usize, limit: usize },

    #[error("invalid mode map: {0}")]
    InvalidMap(String),

    #[error("zero state: {0}")]
    ZeroState(String),

    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("construction check failed: {0}")]
    Construction(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
