use std::sync::Arc;

use crate::base::{Draw, DrawSampler, ParamVector, ProblemConstants, RngStream, StochasticGradientOracle};
use crate::data_io::{EpochBatcher, SparseDataset};
use crate::error::{Error, Result};

use super::{check_batch, sigmoid, softplus};

/// L2-regularized logistic regression (linear SVM with log loss).
///
/// Parameters are `(ŵ, b)` when an intercept is fitted and `ŵ` otherwise;
/// the score is `h = ⟨ŵ, x⟩ + b` and the objective
/// `F(w) = (1/N) Σ ln(1 + exp(−y h)) + (λ/2)‖w‖²`, the bias included in the penalty.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    data: Arc<SparseDataset>,
    reg: f64,
    batch_size: usize,
    intercept: bool,
}

impl LogisticProblem {
    pub fn new(data: Arc<SparseDataset>, reg: f64, batch_size: usize, intercept: bool) -> Result<Self> {
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
            reg,
            batch_size,
            intercept,
        })
    }

    pub fn data(&self) -> &SparseDataset {
        &self.data
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    fn score(&self, i: usize, w: &[f64]) -> f64 {
        let d = self.data.n_features();
        let mut h: f64 = self.data.row(i).iter().map(|&(k, v)| w[k] * v).sum();
        if self.intercept {
            h += w[d];
        }
        h
    }

    /// Mean batch loss plus the penalty, and its exact gradient.
    pub fn value_and_gradient(&self, batch: &[usize], w: &ParamVector) -> Result<(f64, ParamVector)> {
        let dim = self.dimension();
        if w.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: w.len(),
            });
        }
        check_batch(batch, self.data.n_samples())?;
        let d = self.data.n_features();
        let ws = w.as_slice();
        let inv = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; dim];
        for &i in batch {
            let y = self.data.label(i);
            let h = self.score(i, ws);
            loss += softplus(-y * h);
            // dℓ/dh = −y·s(−y h)
            let coeff = -y * sigmoid(-y * h) * inv;
            for &(k, v) in self.data.row(i) {
                grad[k] += coeff * v;
            }
            if self.intercept {
                grad[d] += coeff;
            }
        }
        for (g, wi) in grad.iter_mut().zip(ws) {
            *g += self.reg * wi;
        }
        let value = loss * inv + 0.5 * self.reg * w.norm_sq();
        Ok((value, grad.into()))
    }

    /// `¼ max‖(xᵢ, 1)‖² + λ`, an upper bound on the gradient Lipschitz constant.
    pub fn lipschitz_bound(&self) -> f64 {
        let extra = if self.intercept { 1.0 } else { 0.0 };
        let max_sq = (0..self.data.n_samples())
            .map(|i| self.data.row_norm_sq(i) + extra)
            .fold(0.0, f64::max);
        0.25 * max_sq + self.reg
    }

    fn all_indices(&self) -> Vec<usize> {
        (0..self.data.n_samples()).collect()
    }
}

/// `μ = λ`, `L` from the data bound, and `σ`, `σ₄` as empirical moments of
/// the batch gradients at `w_ref` over one shuffled epoch.
pub fn logistic_constants(p: &LogisticProblem, w_ref: &ParamVector, rng: RngStream) -> Result<ProblemConstants> {
    let mut batcher = EpochBatcher::new(p.batch_size, p.data.n_samples(), rng)?;
    let n_batches = p.data.n_samples().div_ceil(p.batch_size);
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for _ in 0..n_batches {
        let (_, g) = p.value_and_gradient(&batcher.next_batch(), w_ref)?;
        let sq = g.norm_sq();
        m2 += sq;
        m4 += sq * sq;
    }
    let l = p.lipschitz_bound();
    Ok(ProblemConstants {
        mu: p.reg,
        mu2: p.reg,
        lipschitz: l,
        lipschitz4: l,
        sigma: (m2 / n_batches as f64).sqrt(),
        sigma4: (m4 / n_batches as f64).sqrt().sqrt(),
        grad_bound: None,
        noise_ratio: None,
        reg: p.reg,
    })
}

impl StochasticGradientOracle for LogisticProblem {
    fn dimension(&self) -> usize {
        self.data.n_features() + usize::from(self.intercept)
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

    fn dataset(features: &[Vec<f64>], labels: &[f64]) -> Arc<SparseDataset> {
        Arc::new(SparseDataset::from_dense(features, labels.to_vec()).unwrap())
    }

    #[test]
    fn loss_is_ln2_at_zero() {
        let data = dataset(&[vec![1.0, -2.0], vec![0.5, 3.0]], &[1.0, -1.0]);
        let p = LogisticProblem::new(data, 0.0, 1, true).unwrap();
        for i in 0..2 {
            let (v, _) = p.value_and_gradient(&[i], &ParamVector::zeros(3)).unwrap();
            assert_relative_eq!(v, std::f64::consts::LN_2, epsilon = 1e-15);
            assert_relative_eq!(v, 0.693147, epsilon = 1e-6);
        }
    }

    #[test]
    fn single_sample_gradient() {
        let data = dataset(&[vec![1.0]], &[1.0]);
        let p = LogisticProblem::new(data, 0.0, 1, false).unwrap();
        let (_, g) = p.value_and_gradient(&[0], &ParamVector::zeros(1)).unwrap();
        assert_eq!(g.as_slice(), &[-0.5]);
    }

    #[test]
    fn zero_feature_sample_leaves_only_the_penalty() {
        let data = dataset(&[vec![0.0, 0.0]], &[-1.0]);
        let p = LogisticProblem::new(data, 0.3, 1, false).unwrap();
        let w: ParamVector = vec![1.5, -2.0].into();
        let (_, g) = p.value_and_gradient(&[0], &w).unwrap();
        assert_eq!(g.as_slice(), w.scaled(0.3).as_slice());
    }

    #[test]
    fn extreme_scores_stay_finite() {
        let data = dataset(&[vec![1.0]], &[1.0]);
        let p = LogisticProblem::new(data, 0.0, 1, false).unwrap();
        for h in [-700.0, 700.0] {
            let (v, g) = p.value_and_gradient(&[0], &vec![h].into()).unwrap();
            assert!(v.is_finite() && g.is_finite());
        }
        let (v, _) = p.value_and_gradient(&[0], &vec![-700.0].into()).unwrap();
        assert_relative_eq!(v, 700.0, max_relative = 1e-15);
    }

    #[test]
    fn batch_errors() {
        let data = dataset(&[vec![1.0], vec![2.0]], &[1.0, -1.0]);
        let p = LogisticProblem::new(data.clone(), 0.1, 1, true).unwrap();
        assert!(matches!(
            p.value_and_gradient(&[2], &ParamVector::zeros(2)),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
        assert!(p.value_and_gradient(&[], &ParamVector::zeros(2)).is_err());
        assert!(p.value_and_gradient(&[0], &ParamVector::zeros(1)).is_err());
        assert!(LogisticProblem::new(data, 0.1, 3, true).is_err());
    }

    #[test]
    fn lipschitz_bound_from_data() {
        let data = dataset(&[vec![3.0, 4.0], vec![1.0, 0.0]], &[1.0, -1.0]);
        let p = LogisticProblem::new(data.clone(), 0.5, 1, true).unwrap();
        assert_relative_eq!(p.lipschitz_bound(), 0.25 * 26.0 + 0.5);
        let q = LogisticProblem::new(data, 0.5, 1, false).unwrap();
        assert_relative_eq!(q.lipschitz_bound(), 0.25 * 25.0 + 0.5);
    }

    #[test]
    fn empirical_constants_are_ordered() {
        let data = dataset(
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.5], vec![0.2, -0.7]],
            &[1.0, 1.0, -1.0, -1.0],
        );
        let p = LogisticProblem::new(data, 0.1, 2, true).unwrap();
        let c = logistic_constants(&p, &ParamVector::zeros(3), RngStream::new(0, 0)).unwrap();
        assert_eq!(c.mu, 0.1);
        c.validate().unwrap();
    }
}
