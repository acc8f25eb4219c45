//! Foundational numeric types, the randomness contract and the oracle interface.
//!
//! Gradients are plain vectors: the Riesz map between the parameter space and
//! its dual is the identity here, so `∇f(ξ, w)` and `ι∇f(ξ, w)` coincide.

use std::ops::Index;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense vector of model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Builds a vector, rejecting NaN and infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self(vec![value; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    /// Euclidean norm without the finiteness check of [`vec_norm`].
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_dim(other)?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn distance_sq(&self, other: &ParamVector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn scaled(&self, factor: f64) -> ParamVector {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self += factor * other`
    pub fn axpy(&mut self, factor: f64, other: &ParamVector) -> Result<()> {
        self.check_dim(other)?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn check_dim(&self, other: &ParamVector) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Euclidean norm `sqrt(Σ vᵢ²)`; fails on non-finite entries.
pub fn vec_norm(v: &ParamVector) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::NonFinite("vec_norm input"));
    }
    Ok(v.norm())
}

/// Seeded random stream. One master seed, one `stream_id` per sample path.
///
/// Backed by ChaCha8, whose 64-bit stream selector gives independent
/// sequences from a single key without any shared state between paths.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// One realization of the random input `ξ` of a stochastic gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum Draw {
    /// Sample indices of a mini-batch (finite-sum problems).
    Batch(Vec<usize>),
    /// A standardized noise vector added to the exact gradient.
    Noise(Vec<f64>),
}

/// Produces the draw sequence `ξ₁, ξ₂, …` of one sample path.
pub trait DrawSampler: Send {
    fn next_draw(&mut self) -> Result<Draw>;
}

/// Source of stochastic gradients `∇f(ξ, w)` for an objective `F = E[f(ξ, ·)]`.
///
/// Implementations are immutable after construction and shared read-only
/// between sample-path workers.
pub trait StochasticGradientOracle: Send + Sync {
    fn dimension(&self) -> usize;

    /// Sample count when `F` is a finite average of per-sample losses.
    fn n_samples(&self) -> Option<usize> {
        None
    }

    /// Gradient for a given draw; deterministic in `(draw, w)`.
    fn gradient_at(&self, draw: &Draw, w: &ParamVector) -> Result<ParamVector>;

    fn full_gradient(&self, w: &ParamVector) -> Result<ParamVector>;

    fn objective(&self, _w: &ParamVector) -> Result<f64> {
        Err(Error::Unsupported("objective"))
    }

    /// Minimizer of `F` when it is known in closed form.
    fn exact_minimizer(&self) -> Option<ParamVector> {
        None
    }

    /// Fresh draw sequence driven by `rng`.
    fn sampler(&self, rng: RngStream) -> Result<Box<dyn DrawSampler>>;
}

/// Assumption constants of a problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Strong convexity `μ = E[μ_ξ]`.
    pub mu: f64,
    /// `(E[μ_ξ²])^{1/2}`.
    pub mu2: f64,
    /// `L = (E[L_ξ²])^{1/2}`.
    pub lipschitz: f64,
    /// `L₄ = (E[L_ξ⁴])^{1/4}`.
    pub lipschitz4: f64,
    /// `σ = (E‖∇f(ξ, w*)‖²)^{1/2}`.
    pub sigma: f64,
    /// `σ₄ = (E‖∇f(ξ, w*)‖⁴)^{1/4}`.
    pub sigma4: f64,
    pub grad_bound: Option<f64>,
    pub noise_ratio: Option<f64>,
    pub reg: f64,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mu", self.mu),
            ("mu2", self.mu2),
            ("lipschitz", self.lipschitz),
            ("lipschitz4", self.lipschitz4),
            ("sigma", self.sigma),
            ("sigma4", self.sigma4),
            ("reg", self.reg),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::param(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.lipschitz <= 0.0 || self.lipschitz4 <= 0.0 {
            return Err(Error::param("Lipschitz constants must be positive"));
        }
        if let Some(b) = self.grad_bound {
            if !b.is_finite() || b <= 0.0 {
                return Err(Error::param(format!("gradient bound must be positive, got {b}")));
            }
        }
        if let Some(d) = self.noise_ratio {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::param(format!("noise ratio must be >= 0, got {d}")));
            }
        }
        let le = |a: f64, b: f64| a <= b * (1.0 + 1e-12) + 1e-300;
        let ordered = [
            ("mu <= lipschitz", le(self.mu, self.lipschitz)),
            ("mu <= mu2", le(self.mu, self.mu2)),
            ("sigma <= sigma4", le(self.sigma, self.sigma4)),
            ("lipschitz <= lipschitz4", le(self.lipschitz, self.lipschitz4)),
        ];
        for (what, ok) in ordered {
            if !ok {
                return Err(Error::param(format!("moment ordering violated: {what}")));
            }
        }
        Ok(())
    }
}

/// Max-norm gap between `full_gradient(w)` and the size-weighted mean of the
/// batch gradients over `partition`. With equal batch sizes this is the plain
/// arithmetic mean.
pub fn finite_sum_gradient_identity(
    oracle: &dyn StochasticGradientOracle,
    w: &ParamVector,
    partition: &[Vec<usize>],
) -> Result<f64> {
    let n = oracle
        .n_samples()
        .ok_or(Error::Unsupported("finite-sum identity on a streaming oracle"))?;
    let mut seen = vec![false; n];
    for batch in partition {
        if batch.is_empty() {
            return Err(Error::InvalidPartition("empty batch".into()));
        }
        for &i in batch {
            if i >= n {
                return Err(Error::InvalidPartition(format!("index {i} >= {n}")));
            }
            if seen[i] {
                return Err(Error::InvalidPartition(format!("index {i} repeated")));
            }
            seen[i] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidPartition(format!("index {missing} not covered")));
    }

    let full = oracle.full_gradient(w)?;
    let mut mean = ParamVector::zeros(full.len());
    for batch in partition {
        let g = oracle.gradient_at(&Draw::Batch(batch.clone()), w)?;
        mean.axpy(batch.len() as f64 / n as f64, &g)?;
    }
    Ok(full.sub(&mean)?.max_abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;
    use proptest::prelude::*;

    #[test]
    fn norm_examples() {
        assert_eq!(vec_norm(&ParamVector::zeros(3)).unwrap(), 0.0);
        assert_eq!(vec_norm(&vec![3.0, 4.0].into()).unwrap(), 5.0);
        assert_eq!(vec_norm(&vec![1.0].into()).unwrap(), 1.0);
    }

    #[test]
    fn norm_rejects_non_finite() {
        assert!(vec_norm(&vec![1.0, f64::NAN].into()).is_err());
        assert!(vec_norm(&vec![f64::INFINITY].into()).is_err());
        assert!(ParamVector::new(vec![f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn rng_streams_reproduce_and_differ() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let xa: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..64).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn constants_ordering_is_enforced() {
        let ok = ProblemConstants {
            mu: 1.0,
            mu2: 1.0,
            lipschitz: 10.0,
            lipschitz4: 10.0,
            sigma: 1.0,
            sigma4: 1.2,
            grad_bound: None,
            noise_ratio: None,
            reg: 0.0,
        };
        ok.validate().unwrap();
        let bad = ProblemConstants { mu: 11.0, mu2: 11.0, ..ok };
        assert!(bad.validate().is_err());
        let neg = ProblemConstants { sigma: -1.0, ..ok };
        assert!(neg.validate().is_err());
    }

    proptest! {
        #[test]
        fn norm_is_homogeneous(
            v in proptest::collection::vec(-1e3f64..1e3, 1..16),
            c in -1e3f64..1e3,
        ) {
            let v = ParamVector::from(v);
            let lhs = vec_norm(&v.scaled(c)).unwrap();
            let rhs = c.abs() * vec_norm(&v).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-14 * rhs.max(f64::MIN_POSITIVE) + 1e-300);
        }
    }
}
