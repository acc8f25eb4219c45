//! Concrete optimization problems with known or estimable constants.

mod logistic;
mod mlp;
mod quadratic;
mod reference;

pub use logistic::{logistic_constants, LogisticProblem};
pub use mlp::MlpProblem;
pub use quadratic::{log_spaced, quadratic_constants, NoiseKind, QuadraticProblem};
pub use reference::{reference_solution, ReferenceOptions, ReferenceSolution};

/// `ln(1 + exp(z))` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `1 / (1 + exp(-z))` without overflow.
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_batch(batch: &[usize], n: usize) -> crate::Result<()> {
    if batch.is_empty() {
        return Err(crate::Error::param("empty batch"));
    }
    if let Some(&index) = batch.iter().find(|&&i| i >= n) {
        return Err(crate::Error::IndexOutOfRange { index, len: n });
    }
    Ok(())
}
