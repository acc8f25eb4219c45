//! TSGD and SGD update rules, step-size schedules and the taming algebra.

use serde::{Deserialize, Serialize};

use crate::base::{vec_norm, ParamVector};
use crate::error::{Error, Result};

/// Step sizes `α_n`, indexed from `n = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepSchedule {
    /// `α_n = theta / (n + gamma)`.
    Harmonic { theta: f64, gamma: f64 },
    /// `α_n = value` for every `n`.
    Constant { value: f64 },
}

impl StepSchedule {
    pub fn harmonic(theta: f64, gamma: f64) -> Result<Self> {
        let s = StepSchedule::Harmonic { theta, gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(value: f64) -> Result<Self> {
        let s = StepSchedule::Constant { value };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Harmonic { theta, gamma } => {
                if !(theta.is_finite() && theta > 0.0) {
                    return Err(Error::param(format!("theta must be > 0, got {theta}")));
                }
                if !(gamma.is_finite() && gamma >= 0.0) {
                    return Err(Error::param(format!("gamma must be >= 0, got {gamma}")));
                }
            }
            StepSchedule::Constant { value } => {
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::param(format!("constant step must be > 0, got {value}")));
                }
            }
        }
        Ok(())
    }

    /// Same schedule with a different offset `gamma`; constant schedules are unchanged.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        match *self {
            StepSchedule::Harmonic { theta, .. } => StepSchedule::Harmonic { theta, gamma },
            c => c,
        }
    }

    pub fn value(&self, n: u64) -> Result<f64> {
        schedule_value(self, n)
    }
}

pub fn schedule_value(s: &StepSchedule, n: u64) -> Result<f64> {
    if n < 1 {
        return Err(Error::param("step index starts at 1"));
    }
    Ok(match *s {
        StepSchedule::Harmonic { theta, gamma } => theta / (n as f64 + gamma),
        StepSchedule::Constant { value } => value,
    })
}

/// `t / (1 + t)` with `t = alpha * grad_norm`.
///
/// Evaluated as `1 - 1/(1 + t)` once `t > 1` so the result stays strictly
/// below one for every `t` up to about `1.8e16`.
pub fn taming_factor(alpha: f64, grad_norm: f64) -> Result<f64> {
    if !(alpha >= 0.0) || !(grad_norm >= 0.0) {
        return Err(Error::param(format!(
            "taming factor needs alpha, grad_norm >= 0 (got {alpha}, {grad_norm})"
        )));
    }
    let t = alpha * grad_norm;
    if !t.is_finite() {
        return Err(Error::NonFinite("taming factor argument"));
    }
    Ok(if t <= 1.0 { t / (1.0 + t) } else { 1.0 - 1.0 / (1.0 + t) })
}

/// Splits the tamed increment into `(αg, α²‖g‖g / (1 + α‖g‖))`, so that
/// `αg / (1 + α‖g‖) = first − second`.
pub fn perturbation_decomposition(
    alpha: f64,
    gradient: &ParamVector,
) -> Result<(ParamVector, ParamVector)> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha must be > 0, got {alpha}")));
    }
    let g_norm = vec_norm(gradient)?;
    let first = gradient.scaled(alpha);
    let second = gradient.scaled(alpha * alpha * g_norm / (1.0 + alpha * g_norm));
    Ok((first, second))
}

/// Which update rule a path uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tsgd,
    Sgd,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Tsgd => "tsgd",
            Method::Sgd => "sgd",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsgd" => Ok(Method::Tsgd),
            "sgd" => Ok(Method::Sgd),
            other => Err(Error::param(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// What happened in a single update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub n: u64,
    pub alpha: f64,
    pub grad_norm: f64,
    /// `‖w^{n+1} − w^n‖` in closed form: `α‖g‖/(1+α‖g‖)` (TSGD) or `α‖g‖` (SGD).
    pub step_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub iterate: ParamVector,
    /// Index `n` of the next step; starts at 1.
    pub step_index: u64,
    pub schedule: StepSchedule,
}

impl OptimizerState {
    pub fn new(initial: ParamVector, schedule: StepSchedule) -> Result<Self> {
        schedule.validate()?;
        if !initial.is_finite() {
            return Err(Error::NonFinite("initial iterate"));
        }
        Ok(Self {
            iterate: initial,
            step_index: 1,
            schedule,
        })
    }

    /// Applies one update in place.
    pub fn apply(&mut self, method: Method, gradient: &ParamVector) -> Result<StepInfo> {
        self.iterate.check_dim(gradient)?;
        let grad_norm = vec_norm(gradient)?;
        let n = self.step_index;
        let alpha = self.schedule.value(n)?;
        let (coeff, step_length) = match method {
            Method::Tsgd => (
                tamed_coefficient(alpha, grad_norm),
                taming_factor(alpha, grad_norm)?,
            ),
            Method::Sgd => (alpha, alpha * grad_norm),
        };
        for (w, g) in self.iterate.as_mut_slice().iter_mut().zip(gradient.iter()) {
            *w -= coeff * g;
        }
        self.step_index += 1;
        Ok(StepInfo {
            n,
            alpha,
            grad_norm,
            step_length,
        })
    }
}

/// Scalar multiplying the gradient in the tamed update: `α / (1 + α‖g(z)‖)`.
pub(crate) fn tamed_coefficient(alpha: f64, taming_norm: f64) -> f64 {
    alpha / (1.0 + alpha * taming_norm)
}

pub fn tsgd_step(mut state: OptimizerState, gradient: &ParamVector) -> Result<OptimizerState> {
    state.apply(Method::Tsgd, gradient)?;
    Ok(state)
}

pub fn sgd_step(mut state: OptimizerState, gradient: &ParamVector) -> Result<OptimizerState> {
    state.apply(Method::Sgd, gradient)?;
    Ok(state)
}
