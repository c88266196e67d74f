//! Minimal reverse-mode automatic differentiation: exactly the tensor ops,
//! losses, and optimizer the models in this crate need.

pub mod gradcheck;
pub mod loss;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use optim::{Adadelta, Parameter};
pub use tensor::Tensor;
