//! Finite-difference gradient verification.
//!
//! Compares analytic gradients against central differences (h = 1e-5) on
//! seeded uniform random inputs and reports the maximum relative error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::tensor::Tensor;

const H: f64 = 1e-5;

/// Runs `f` (a scalar-valued computation over the given input shapes) once
/// with gradient tracking and then twice per element with ±h perturbations.
/// Returns the maximum relative error between analytic and numeric
/// gradients, normalized by max(1, |analytic|, |numeric|).
pub fn grad_check<F>(f: F, shapes: &[&[usize]], seed: u64) -> f64
where
    F: Fn(&[Tensor]) -> Tensor,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<Vec<f64>> = shapes
        .iter()
        .map(|sh| {
            let n: usize = sh.iter().product();
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        })
        .collect();

    let tensors: Vec<Tensor> = shapes
        .iter()
        .zip(&data)
        .map(|(sh, d)| Tensor::from_vec(sh.to_vec(), d.clone()).requires_grad(true))
        .collect();
    let loss = f(&tensors);
    assert_eq!(loss.numel(), 1, "grad_check requires a scalar objective");
    loss.backward();
    let analytic: Vec<Vec<f64>> = tensors
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let eval = |data: &[Vec<f64>]| -> f64 {
        let ts: Vec<Tensor> = shapes
            .iter()
            .zip(data)
            .map(|(sh, d)| Tensor::from_vec(sh.to_vec(), d.clone()))
            .collect();
        f(&ts).item()
    };

    let mut max_rel: f64 = 0.0;
    for i in 0..data.len() {
        for j in 0..data[i].len() {
            let mut plus = data.clone();
            plus[i][j] += H;
            let mut minus = data.clone();
            minus[i][j] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let ana = analytic[i][j];
            let denom = numeric.abs().max(ana.abs()).max(1.0);
            max_rel = max_rel.max((numeric - ana).abs() / denom);
        }
    }
    max_rel
}
