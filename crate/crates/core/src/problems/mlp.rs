use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::base::{Draw, DrawSampler, ParamVector, RngStream, StochasticGradientOracle};
use crate::data_io::{EpochBatcher, SparseDataset};
use crate::error::{Error, Result};

use super::{check_batch, sigmoid, softplus};

/// One-hidden-layer classifier: ReLU hidden units, sigmoid output.
///
/// The log loss is applied to the pre-sigmoid score `s`, i.e. `ℓ = ln(1 + exp(−y s))`
/// with `s = w₂ᵀ relu(W₁x + b₁) + b₂`. Parameter layout:
/// `[W₁ (row-major, width × d) | b₁ | w₂ | b₂]`, biases present only when enabled.
#[derive(Debug, Clone)]
pub struct MlpProblem {
    data: Arc<SparseDataset>,
    hidden_width: usize,
    reg: f64,
    batch_size: usize,
    bias: bool,
}

struct Layout {
    d: usize,
    h: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    dim: usize,
}

impl MlpProblem {
    pub fn new(
        data: Arc<SparseDataset>,
        hidden_width: usize,
        reg: f64,
        batch_size: usize,
        bias: bool,
    ) -> Result<Self> {
        if hidden_width == 0 {
            return Err(Error::param("hidden width must be >= 1"));
        }
        if !(reg.is_finite() && reg >= 0.0) {
            return Err(Error::param(format!("regularization must be >= 0, got {reg}")));
        }
        if batch_size == 0 || batch_size > data.n_samples() {
            return Err(Error::param(format!(
                "batch size {batch_size} outside 1..={}",
                data.n_samples()
            )));
        }
        Ok(Self {
            data,
            hidden_width,
            reg,
            batch_size,
            bias,
        })
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden_width
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    fn layout(&self) -> Layout {
        let d = self.data.n_features();
        let h = self.hidden_width;
        let b1 = h * d;
        let w2 = b1 + if self.bias { h } else { 0 };
        let b2 = w2 + h;
        let dim = b2 + usize::from(self.bias);
        Layout { d, h, b1, w2, b2, dim }
    }

    /// Gaussian initialization: `W₁ ~ N(0, 2/d)`, `w₂ ~ N(0, 1/width)`, biases zero.
    pub fn random_init(&self, rng: &mut RngStream) -> ParamVector {
        let l = self.layout();
        let mut w = vec![0.0; l.dim];
        let s1 = (2.0 / l.d.max(1) as f64).sqrt();
        let s2 = (1.0 / l.h as f64).sqrt();
        for v in &mut w[..l.b1] {
            *v = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        for v in &mut w[l.w2..l.w2 + l.h] {
            *v = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        w.into()
    }

    /// Mean batch loss plus `(λ/2)‖w‖²` and its backpropagated gradient.
    /// The ReLU derivative at zero is taken as zero.
    pub fn value_and_gradient(&self, batch: &[usize], w: &ParamVector) -> Result<(f64, ParamVector)> {
        let l = self.layout();
        if w.len() != l.dim {
            return Err(Error::DimensionMismatch {
                expected: l.dim,
                found: w.len(),
            });
        }
        check_batch(batch, self.data.n_samples())?;
        let ws = w.as_slice();
        let inv = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; l.dim];
        let mut pre = vec![0.0; l.h];
        let mut loss = 0.0;

        for &i in batch {
            let x = self.data.row(i);
            let y = self.data.label(i);
            let mut score = if self.bias { ws[l.b2] } else { 0.0 };
            for (j, z) in pre.iter_mut().enumerate() {
                let row = &ws[j * l.d..(j + 1) * l.d];
                *z = x.iter().map(|&(k, v)| row[k] * v).sum::<f64>();
                if self.bias {
                    *z += ws[l.b1 + j];
                }
                score += ws[l.w2 + j] * z.max(0.0);
            }
            loss += softplus(-y * score);

            let delta = -y * sigmoid(-y * score) * inv;
            if self.bias {
                grad[l.b2] += delta;
            }
            for (j, &z) in pre.iter().enumerate() {
                if z <= 0.0 {
                    continue;
                }
                grad[l.w2 + j] += delta * z;
                let back = delta * ws[l.w2 + j];
                if self.bias {
                    grad[l.b1 + j] += back;
                }
                let row = &mut grad[j * l.d..(j + 1) * l.d];
                for &(k, v) in x {
                    row[k] += back * v;
                }
            }
        }
        for (g, wi) in grad.iter_mut().zip(ws) {
            *g += self.reg * wi;
        }
        Ok((loss * inv + 0.5 * self.reg * w.norm_sq(), grad.into()))
    }

    fn all_indices(&self) -> Vec<usize> {
        (0..self.data.n_samples()).collect()
    }
}

impl StochasticGradientOracle for MlpProblem {
    fn dimension(&self) -> usize {
        self.layout().dim
    }

    fn n_samples(&self) -> Option<usize> {
        Some(self.data.n_samples())
    }

    fn gradient_at(&self, draw: &Draw, w: &ParamVector) -> Result<ParamVector> {
        match draw {
            Draw::Batch(b) => Ok(self.value_and_gradient(b, w)?.1),
            Draw::Noise(_) => Err(Error::Unsupported("noise draw on a finite-sum problem")),
        }
    }

    fn full_gradient(&self, w: &ParamVector) -> Result<ParamVector> {
        Ok(self.value_and_gradient(&self.all_indices(), w)?.1)
    }

    fn objective(&self, w: &ParamVector) -> Result<f64> {
        Ok(self.value_and_gradient(&self.all_indices(), w)?.0)
    }

    fn sampler(&self, rng: RngStream) -> Result<Box<dyn DrawSampler>> {
        Ok(Box::new(EpochBatcher::new(self.batch_size, self.data.n_samples(), rng)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn data(features: &[Vec<f64>], labels: &[f64]) -> Arc<SparseDataset> {
        Arc::new(SparseDataset::from_dense(features, labels.to_vec()).unwrap())
    }

    #[test]
    fn zero_weights_give_ln2() {
        let p = MlpProblem::new(data(&[vec![1.0, 2.0]], &[1.0]), 3, 0.0, 1, true).unwrap();
        assert_eq!(p.dimension(), 3 * 2 + 3 + 3 + 1);
        let (v, _) = p.value_and_gradient(&[0], &ParamVector::zeros(p.dimension())).unwrap();
        assert_relative_eq!(v, std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn two_parameter_chain_rule() {
        // s = w2 · relu(w1 · x), x = 2, y = -1, w = (w1, w2) = (0.5, -1.5)
        let p = MlpProblem::new(data(&[vec![2.0]], &[-1.0]), 1, 0.0, 1, false).unwrap();
        assert_eq!(p.dimension(), 2);
        let (w1, w2, x, y): (f64, f64, f64, f64) = (0.5, -1.5, 2.0, -1.0);
        let a = w1 * x;
        let s = w2 * a;
        let dl_ds = -y / (1.0 + (y * s).exp());
        let expected = [dl_ds * w2 * x, dl_ds * a];
        let (v, g) = p.value_and_gradient(&[0], &vec![w1, w2].into()).unwrap();
        assert_relative_eq!(v, (1.0 + (-y * s).exp()).ln(), epsilon = 1e-15);
        assert_relative_eq!(g[0], expected[0], epsilon = 1e-15);
        assert_relative_eq!(g[1], expected[1], epsilon = 1e-15);
    }

    #[test]
    fn penalty_gradient_is_reg_times_w() {
        let feats = [vec![0.4, -1.0], vec![1.2, 0.3]];
        let d = data(&feats, &[1.0, -1.0]);
        let plain = MlpProblem::new(d.clone(), 2, 0.0, 2, true).unwrap();
        let reg = MlpProblem::new(d, 2, 0.25, 2, true).unwrap();
        let w = plain.random_init(&mut RngStream::new(5, 0));
        let (_, g0) = plain.value_and_gradient(&[0, 1], &w).unwrap();
        let (_, g1) = reg.value_and_gradient(&[0, 1], &w).unwrap();
        let diff = g1.sub(&g0).unwrap();
        for (a, b) in diff.iter().zip(w.iter()) {
            assert_relative_eq!(*a, 0.25 * b, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_feature_sample_gradient_is_penalty_only() {
        let p = MlpProblem::new(data(&[vec![0.0, 0.0]], &[1.0]), 2, 0.1, 1, false).unwrap();
        let w: ParamVector = vec![0.3, -0.2, 0.5, 0.1, 0.7, -0.4].into();
        let (_, g) = p.value_and_gradient(&[0], &w).unwrap();
        assert_eq!(g.as_slice(), w.scaled(0.1).as_slice());
    }
}
