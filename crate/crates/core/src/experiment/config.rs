use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::base::{ParamVector, ProblemConstants, RngStream, StochasticGradientOracle};
use crate::data_io::{default_batch_size, read_libsvm_file, LibsvmOptions, SparseDataset};
use crate::error::{Error, Result};
use crate::optimizers::{Method, StepSchedule};
use crate::problems::{
    log_spaced, quadratic_constants, LogisticProblem, MlpProblem, NoiseKind, QuadraticProblem, ReferenceOptions,
};

/// Diagonal of a quadratic: explicit values or a log-spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DiagSpec {
    Values(Vec<f64>),
    LogSpaced { dim: usize, min: f64, max: f64 },
}

impl DiagSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            DiagSpec::Values(v) => Ok(v.clone()),
            DiagSpec::LogSpaced { dim, min, max } => {
                if *dim == 0 || !(*min > 0.0 && min <= max && max.is_finite()) {
                    return Err(Error::Config(format!(
                        "log-spaced diagonal needs dim >= 1 and 0 < min <= max, got {dim}, {min}, {max}"
                    )));
                }
                Ok(log_spaced(*dim, *min, *max))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub n_samples: usize,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        diag: DiagSpec,
        /// Minimizer; defaults to the all-ones vector.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<Vec<f64>>,
        noise_sigma: f64,
        #[serde(default)]
        noise_kind: NoiseKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pool: Option<PoolSpec>,
    },
    Logistic {
        data: PathBuf,
        reg: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_size: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_features: Option<usize>,
        #[serde(default = "default_true")]
        intercept: bool,
    },
    Mlp {
        data: PathBuf,
        hidden_width: usize,
        reg: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_size: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_features: Option<usize>,
        #[serde(default = "default_true")]
        bias: bool,
        /// Seed of the random initial weights when no initial point is given.
        #[serde(default)]
        init_seed: u64,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub schedule: StepSchedule,
    pub optimizer: Method,
    pub n_steps: u64,
    pub n_paths: usize,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    pub seed: u64,
    /// Starting point `w₁`; zeros (random weights for the MLP) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    /// Stand-in minimizer run for problems without a closed-form one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_record_every() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reads a config file; relative data and output paths are taken
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.problem {
            ProblemSpec::Logistic { data, .. } | ProblemSpec::Mlp { data, .. } => resolve(data),
            ProblemSpec::Quadratic { .. } => {}
        }
        if let Some(out) = &mut cfg.output {
            resolve(out);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 1 || self.n_steps < 1 || self.record_every < 1 {
            return Err(Error::Config(
                "n_paths, n_steps and record_every must all be >= 1".into(),
            ));
        }
        self.schedule
            .validate()
            .map_err(|e| Error::Config(format!("schedule: {e}")))?;
        if let Some(w) = &self.initial {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("initial point must be finite".into()));
            }
        }
        match &self.problem {
            ProblemSpec::Quadratic { diag, target, noise_sigma, pool, .. } => {
                let d = diag.values()?.len();
                if let Some(t) = target {
                    if t.len() != d {
                        return Err(Error::Config(format!("target has {} entries, diagonal {d}", t.len())));
                    }
                }
                if !(noise_sigma.is_finite() && *noise_sigma >= 0.0) {
                    return Err(Error::Config(format!("noise_sigma must be >= 0, got {noise_sigma}")));
                }
                if let Some(p) = pool {
                    if p.n_samples == 0 || p.batch_size == 0 || p.batch_size > p.n_samples {
                        return Err(Error::Config("pool needs 1 <= batch_size <= n_samples".into()));
                    }
                }
            }
            ProblemSpec::Logistic { reg, batch_size, .. } | ProblemSpec::Mlp { reg, batch_size, .. } => {
                if !(reg.is_finite() && *reg >= 0.0) {
                    return Err(Error::Config(format!("reg must be >= 0, got {reg}")));
                }
                if *batch_size == Some(0) {
                    return Err(Error::Config("batch_size must be >= 1".into()));
                }
            }
        }
        if let ProblemSpec::Mlp { hidden_width: 0, .. } = self.problem {
            return Err(Error::Config("hidden_width must be >= 1".into()));
        }
        if let Some(r) = &self.reference {
            if r.budget < 10 || r.eval_every == 0 || !(r.tol.is_finite() && r.tol >= 0.0) {
                return Err(Error::Config(
                    "reference needs budget >= 10, eval_every >= 1 and tol >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Options of the stand-in minimizer run: the configured ones, or a
    /// TSGD run ten times longer than the experiment with the same schedule.
    pub fn reference_options(&self) -> ReferenceOptions {
        self.reference.clone().unwrap_or_else(|| {
            let budget = self.n_steps.saturating_mul(10).max(1000);
            ReferenceOptions {
                budget,
                schedule: self.schedule,
                seed: self.seed,
                eval_every: (budget / 1000).max(1),
                tol: 1e-4,
            }
        })
    }
}

/// Problem instance built from a config together with its starting point.
pub struct BuiltProblem {
    pub oracle: Arc<dyn StochasticGradientOracle>,
    pub initial: ParamVector,
    /// `(μ, L)` when known exactly, enabling the objective-gap sandwich audit.
    pub curvature: Option<(f64, f64)>,
    pub constants: Option<ProblemConstants>,
}

fn load_data(path: &Path, n_features: Option<usize>) -> Result<Arc<SparseDataset>> {
    Ok(Arc::new(read_libsvm_file(path, LibsvmOptions { n_features })?))
}

fn initial_or(cfg: &ExperimentConfig, dim: usize, fallback: impl FnOnce() -> ParamVector) -> Result<ParamVector> {
    match &cfg.initial {
        Some(w) if w.len() != dim => Err(Error::Config(format!(
            "initial point has {} entries, problem dimension is {dim}",
            w.len()
        ))),
        Some(w) => ParamVector::new(w.clone()),
        None => Ok(fallback()),
    }
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<BuiltProblem> {
    cfg.validate()?;
    match &cfg.problem {
        ProblemSpec::Quadratic { diag, target, noise_sigma, noise_kind, pool } => {
            let diag = diag.values()?;
            let d = diag.len();
            let target = ParamVector::new(target.clone().unwrap_or_else(|| vec![1.0; d]))?;
            let mut p = QuadraticProblem::new(diag, target, *noise_sigma, *noise_kind)?;
            if let Some(pool) = pool {
                p = p.with_sample_pool(pool.n_samples, pool.batch_size, pool.seed)?;
            }
            let initial = initial_or(cfg, d, || ParamVector::zeros(d))?;
            let constants = quadratic_constants(&p);
            Ok(BuiltProblem {
                curvature: Some((p.mu(), p.lipschitz())),
                constants: Some(constants),
                initial,
                oracle: Arc::new(p),
            })
        }
        ProblemSpec::Logistic { data, reg, batch_size, n_features, intercept } => {
            let data = load_data(data, *n_features)?;
            let batch = batch_size.unwrap_or_else(|| default_batch_size(data.n_samples()));
            let p = LogisticProblem::new(data, *reg, batch, *intercept)?;
            let dim = p.dimension();
            Ok(BuiltProblem {
                initial: initial_or(cfg, dim, || ParamVector::zeros(dim))?,
                curvature: None,
                constants: None,
                oracle: Arc::new(p),
            })
        }
        ProblemSpec::Mlp { data, hidden_width, reg, batch_size, n_features, bias, init_seed } => {
            let data = load_data(data, *n_features)?;
            let batch = batch_size.unwrap_or_else(|| default_batch_size(data.n_samples()));
            let p = MlpProblem::new(data, *hidden_width, *reg, batch, *bias)?;
            let dim = p.dimension();
            let initial = initial_or(cfg, dim, || p.random_init(&mut RngStream::new(*init_seed, u64::MAX - 2)))?;
            Ok(BuiltProblem {
                initial,
                curvature: None,
                constants: None,
                oracle: Arc::new(p),
            })
        }
    }
}
