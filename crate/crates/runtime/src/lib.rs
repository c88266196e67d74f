//! Forward-only inference runtime for exported student models.
//!
//! This crate owns the `TSAK` bundle byte format: a self-describing,
//! checksummed container holding the layer table, 32-bit float weights,
//! per-channel normalization statistics, and class names. It has no
//! dependency on the training stack, so it can be embedded on its own.

mod exec;
mod format;

pub use exec::{Scratch, StudentRuntime};
pub use format::{write_bundle, BundleSpec, LayerDesc, BUNDLE_VERSION};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bundle format error: {0}")]
    Format(String),
    #[error("bundle integrity check failed: {0}")]
    Corrupt(String),
    #[error("inference input error: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, BundleError>;
