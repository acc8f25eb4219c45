use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::base::{Draw, DrawSampler, ParamVector, ProblemConstants, RngStream, StochasticGradientOracle};
use crate::data_io::EpochBatcher;
use crate::error::{Error, Result};

/// Distribution of the standardized gradient noise `η` (zero mean, unit variance per coordinate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Uniform on `[-√3, √3]` per coordinate.
    BoundedUniform,
}

impl NoiseKind {
    fn sample(self, rng: &mut RngStream, dim: usize) -> Vec<f64> {
        match self {
            NoiseKind::Gaussian => (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
            NoiseKind::BoundedUniform => {
                let half = 3f64.sqrt();
                let u = Uniform::new_inclusive(-half, half).expect("valid interval");
                (0..dim).map(|_| u.sample(rng)).collect()
            }
        }
    }

    /// `E‖η‖²` and `E‖η‖⁴` in dimension `d`.
    fn moments(self, d: f64) -> (f64, f64) {
        match self {
            NoiseKind::Gaussian => (d, d * (d + 2.0)),
            // E η⁴ = 9/5 for the unit-variance uniform
            NoiseKind::BoundedUniform => (d, d * 9.0 / 5.0 + d * (d - 1.0)),
        }
    }
}

/// `F(w) = ½ (w − w*)ᵀ diag (w − w*)` with per-draw gradient `∇F(w) + s·η`.
///
/// Two draw models are available: fresh noise per step (streaming), or a
/// fixed centered pool of `N` noise vectors sampled in mini-batches, which
/// turns the problem into a finite sum.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    diag: Vec<f64>,
    target: ParamVector,
    noise_sigma: f64,
    noise_kind: NoiseKind,
    pool: Option<NoisePool>,
}

#[derive(Debug, Clone, PartialEq)]
struct NoisePool {
    samples: Vec<Vec<f64>>,
    batch_size: usize,
}

impl QuadraticProblem {
    pub fn new(
        diag: Vec<f64>,
        target: ParamVector,
        noise_sigma: f64,
        noise_kind: NoiseKind,
    ) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::Empty("quadratic diagonal"));
        }
        if let Some(bad) = diag.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::param(format!("diagonal entries must be > 0, got {bad}")));
        }
        if target.len() != diag.len() {
            return Err(Error::DimensionMismatch {
                expected: diag.len(),
                found: target.len(),
            });
        }
        if !target.is_finite() {
            return Err(Error::NonFinite("quadratic target"));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(Error::param(format!("noise scale must be >= 0, got {noise_sigma}")));
        }
        Ok(Self {
            diag,
            target,
            noise_sigma,
            noise_kind,
            pool: None,
        })
    }

    /// Replaces streaming noise by `n_samples` fixed draws, centered so their
    /// mean is zero, sampled in batches of `batch_size`.
    pub fn with_sample_pool(mut self, n_samples: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n_samples == 0 || batch_size == 0 || batch_size > n_samples {
            return Err(Error::param(format!(
                "need 1 <= batch_size <= n_samples, got {batch_size} and {n_samples}"
            )));
        }
        let d = self.diag.len();
        let mut rng = RngStream::new(seed, u64::MAX);
        let mut samples: Vec<Vec<f64>> =
            (0..n_samples).map(|_| self.noise_kind.sample(&mut rng, d)).collect();
        for k in 0..d {
            let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n_samples as f64;
            for s in &mut samples {
                s[k] -= mean;
            }
        }
        self.pool = Some(NoisePool {
            samples,
            batch_size,
        });
        Ok(self)
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn target(&self) -> &ParamVector {
        &self.target
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn noise_kind(&self) -> NoiseKind {
        self.noise_kind
    }

    pub fn mu(&self) -> f64 {
        self.diag.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn lipschitz(&self) -> f64 {
        self.diag.iter().copied().fold(0.0, f64::max)
    }

    fn exact_gradient(&self, w: &ParamVector) -> Result<ParamVector> {
        self.target.check_dim(w)?;
        Ok(self
            .diag
            .iter()
            .zip(w.iter().zip(self.target.iter()))
            .map(|(d, (wi, ti))| d * (wi - ti))
            .collect::<Vec<_>>()
            .into())
    }
}

pub fn quadratic_constants(p: &QuadraticProblem) -> ProblemConstants {
    let mu = p.mu();
    let l = p.lipschitz();
    let s = p.noise_sigma;
    let (m2, m4) = match &p.pool {
        // single-sample draws from the pool
        Some(pool) => {
            let n = pool.samples.len() as f64;
            let sq: Vec<f64> = pool.samples.iter().map(|e| e.iter().map(|v| v * v).sum()).collect();
            (sq.iter().sum::<f64>() / n, sq.iter().map(|v| v * v).sum::<f64>() / n)
        }
        None => p.noise_kind.moments(p.diag.len() as f64),
    };
    let grad_bound = match (p.noise_kind, &p.pool) {
        (NoiseKind::BoundedUniform, None) if s > 0.0 => Some(s * (3.0 * p.diag.len() as f64).sqrt()),
        _ => None,
    };
    ProblemConstants {
        mu,
        mu2: mu,
        lipschitz: l,
        lipschitz4: l,
        sigma: s * m2.sqrt(),
        sigma4: s * m4.sqrt().sqrt(),
        grad_bound,
        noise_ratio: None,
        reg: 0.0,
    }
}

/// `d` values spaced evenly in log scale from `min` to `max`.
pub fn log_spaced(d: usize, min: f64, max: f64) -> Vec<f64> {
    if d == 1 {
        return vec![min];
    }
    let (a, b) = (min.ln(), max.ln());
    (0..d)
        .map(|i| (a + (b - a) * i as f64 / (d - 1) as f64).exp())
        .collect()
}

struct NoiseSampler {
    rng: RngStream,
    dim: usize,
    kind: NoiseKind,
}

impl DrawSampler for NoiseSampler {
    fn next_draw(&mut self) -> Result<Draw> {
        Ok(Draw::Noise(self.kind.sample(&mut self.rng, self.dim)))
    }
}

impl StochasticGradientOracle for QuadraticProblem {
    fn dimension(&self) -> usize {
        self.diag.len()
    }

    fn n_samples(&self) -> Option<usize> {
        self.pool.as_ref().map(|p| p.samples.len())
    }

    fn gradient_at(&self, draw: &Draw, w: &ParamVector) -> Result<ParamVector> {
        let mut g = self.exact_gradient(w)?;
        match (draw, &self.pool) {
            (Draw::Noise(eta), None) => {
                g.axpy(self.noise_sigma, &ParamVector::from(eta.clone()))?;
            }
            (Draw::Batch(batch), Some(pool)) => {
                super::check_batch(batch, pool.samples.len())?;
                let scale = self.noise_sigma / batch.len() as f64;
                let out = g.as_mut_slice();
                for &i in batch {
                    for (o, e) in out.iter_mut().zip(&pool.samples[i]) {
                        *o += scale * e;
                    }
                }
            }
            (Draw::Noise(_), Some(_)) => return Err(Error::Unsupported("noise draw on pooled quadratic")),
            (Draw::Batch(_), None) => return Err(Error::Unsupported("batch draw on streaming quadratic")),
        }
        Ok(g)
    }

    fn full_gradient(&self, w: &ParamVector) -> Result<ParamVector> {
        self.exact_gradient(w)
    }

    fn objective(&self, w: &ParamVector) -> Result<f64> {
        self.target.check_dim(w)?;
        Ok(0.5
            * self
                .diag
                .iter()
                .zip(w.iter().zip(self.target.iter()))
                .map(|(d, (wi, ti))| d * (wi - ti) * (wi - ti))
                .sum::<f64>())
    }

    fn exact_minimizer(&self) -> Option<ParamVector> {
        Some(self.target.clone())
    }

    fn sampler(&self, rng: RngStream) -> Result<Box<dyn DrawSampler>> {
        Ok(match &self.pool {
            Some(pool) => Box::new(EpochBatcher::new(pool.batch_size, pool.samples.len(), rng)?),
            None => Box::new(NoiseSampler {
                rng,
                dim: self.diag.len(),
                kind: self.noise_kind,
            }),
        })
    }
}
