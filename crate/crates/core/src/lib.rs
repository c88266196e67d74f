//! Training stack for semantic-aware knowledge distillation on wearable
//! activity-recognition signals: preprocessing, models, distillation
//! strategies, evaluation, profiling, and synthetic data generation.

pub mod artifact;
pub mod autodiff;
pub mod distill;
pub mod error;
pub mod eval;
pub mod models;
pub mod profiler;
pub mod signal;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
