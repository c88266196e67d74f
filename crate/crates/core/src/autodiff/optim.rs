//! Trainable parameters and the Adadelta optimizer.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// A named, optionally frozen model weight. Frozen parameters track no
/// gradients and are skipped by the optimizer, so training leaves their
/// values bitwise unchanged. The frozen state lives on the shared tensor,
/// so every clone of a parameter sees the same state.
#[derive(Clone)]
pub struct Parameter {
    pub tensor: Tensor,
    pub name: String,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Parameter {
        Parameter {
            tensor: tensor.requires_grad(true),
            name: name.into(),
        }
    }

    /// Marks the parameter frozen and stops gradient tracking through it.
    pub fn freeze(&self) {
        self.tensor.set_requires_grad(false);
    }

    pub fn unfreeze(&self) {
        self.tensor.set_requires_grad(true);
    }

    pub fn frozen(&self) -> bool {
        !self.tensor.requires_grad_flag()
    }
}

/// Adadelta with the standard accumulator recurrences
/// (rho = 0.9, eps = 1e-6) and an explicit learning-rate multiplier.
pub struct Adadelta {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
    acc_grad: Vec<Vec<f64>>,
    acc_update: Vec<Vec<f64>>,
}

impl Adadelta {
    pub fn new(params: &[Parameter], lr: f64) -> Adadelta {
        Adadelta {
            rho: 0.9,
            eps: 1e-6,
            lr,
            acc_grad: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
            acc_update: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
        }
    }

    /// Applies one update using each parameter's accumulated gradient, then
    /// clears the gradients. Parameters without a gradient, and frozen
    /// parameters, are left untouched (state included).
    pub fn step(&mut self, params: &[Parameter]) -> Result<()> {
        if params.len() != self.acc_grad.len() {
            return Err(Error::Shape(format!(
                "optimizer state holds {} parameters but step received {}",
                self.acc_grad.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.frozen() {
                p.tensor.zero_grad();
                continue;
            }
            let Some(g) = p.tensor.take_grad() else {
                continue;
            };
            if g.len() != self.acc_grad[i].len() {
                return Err(Error::Shape(format!(
                    "gradient length {} does not match state length {} for '{}'",
                    g.len(),
                    self.acc_grad[i].len(),
                    p.name
                )));
            }
            let rho = self.rho;
            let eps = self.eps;
            let mut values = p.tensor.to_vec();
            let acc_g = &mut self.acc_grad[i];
            let acc_u = &mut self.acc_update[i];
            for j in 0..g.len() {
                let gj = g[j];
                acc_g[j] = rho * acc_g[j] + (1.0 - rho) * gj * gj;
                let delta = ((acc_u[j] + eps) / (acc_g[j] + eps)).sqrt() * gj;
                acc_u[j] = rho * acc_u[j] + (1.0 - rho) * delta * delta;
                values[j] -= self.lr * delta;
            }
            p.tensor.set_data(&values);
        }
        Ok(())
    }
}
