use thiserror::Error;

/// Error taxonomy shared across the pipeline crates.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Bundle(#[from] tsak_runtime::BundleError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable category used by the CLI for exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::InvalidLabel(_) => "invalid-label",
            Error::Split(_) => "split",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Bundle(_) => "bundle",
        }
    }
}
