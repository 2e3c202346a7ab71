use thiserror::Error;

/// Crate-wide error type. Harness commands map these onto process exit codes
/// (config 2, missing prerequisite 3, numeric divergence 4, everything else 1).
#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("wav: {0}")]
    Wav(String),
    #[error("config: {0}")]
    Config(String),
    #[error("prerequisite missing: {0}")]
    Prerequisite(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
