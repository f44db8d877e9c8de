use thiserror::Error;

/// Errors raised by the simulator and its numerical building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvacError {
    /// A configuration value is missing, unknown or out of range. `key` is the
    /// dotted path of the offending entry.
    #[error("invalid configuration at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("density estimation failed: {0}")]
    Estimation(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// The explicit Fokker-Planck stepper refuses time steps outside its
    /// stability region.
    #[error("oracle step rejected: {0}")]
    OracleStability(String),

    #[error("integration fault: {0}")]
    Integration(String),

    #[error("controller fault: {0}")]
    Controller(String),

    /// An internal contract between allocation and command synthesis broke.
    #[error("logic fault: {0}")]
    Logic(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl EvacError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        EvacError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for EvacError {
    fn from(e: std::io::Error) -> Self {
        EvacError::Io(e.to_string())
    }
}

impl From<csv::Error> for EvacError {
    fn from(e: csv::Error) -> Self {
        EvacError::Io(e.to_string())
    }
}

pub type Result<T, E = EvacError> = std::result::Result<T, E>;
