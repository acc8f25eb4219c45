//! Randomized and grid checks of the taming inequalities, the operator
//! identity, the auxiliary bounds, the envelope shape and the pathwise bound.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::base::{ParamVector, RngStream};
use crate::error::Result;
use crate::optimizers::{perturbation_decomposition, taming_factor, Method, StepSchedule};
use crate::problems::NoiseKind;
use crate::theory::{
    algebraic_bound_product, algebraic_bound_sum, second_lip_identity_sides, taylor_inequality,
    theorem1_envelope,
};

use super::{run_paths, DiagSpec, ExperimentConfig, PoolSpec, ProblemSpec};

const SUITE_SEED: u64 = 0x7a3d_5eed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub cases: u64,
    pub violations: u64,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, cases: u64, violations: u64, detail: String) -> Self {
        Self {
            name,
            passed: violations == 0 && cases > 0,
            cases,
            violations,
            detail,
        }
    }
}

fn log_uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

fn random_vector(rng: &mut RngStream, dim: usize, norm: f64) -> ParamVector {
    let raw: ParamVector = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>().into();
    let len = raw.norm();
    if len == 0.0 {
        return ParamVector::zeros(dim);
    }
    raw.scaled(norm / len)
}

/// `½ min{1, t} ≤ t/(1+t) ≤ min{1, t}` and `t/(1+t) < 1` for `α, ‖g‖` log-uniform in `[1e-8, 1e8]`.
pub fn check_taming_sandwich(cases: u64) -> Result<CheckOutcome> {
    let mut rng = RngStream::new(SUITE_SEED, 1);
    let mut bad = 0;
    for _ in 0..cases {
        let alpha = log_uniform(&mut rng, 1e-8, 1e8);
        let g = log_uniform(&mut rng, 1e-8, 1e8);
        let f = taming_factor(alpha, g)?;
        let cap = (alpha * g).min(1.0);
        if !(f >= 0.5 * cap - 1e-12 * cap && f <= cap && f < 1.0) {
            bad += 1;
        }
    }
    Ok(CheckOutcome::new("taming sandwich and step length below one", cases, bad, String::new()))
}

/// `αg − α²‖g‖g/(1+α‖g‖)` equals the tamed increment `αg/(1+α‖g‖)`.
pub fn check_decomposition(cases: u64) -> Result<CheckOutcome> {
    let mut rng = RngStream::new(SUITE_SEED, 2);
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let alpha = log_uniform(&mut rng, 1e-4, 1e4);
        let dim = rng.random_range(1..=8);
        let norm = log_uniform(&mut rng, 1e-4, 1e4);
        let g = random_vector(&mut rng, dim, norm);
        let (plain, corr) = perturbation_decomposition(alpha, &g)?;
        let tamed = g.scaled(alpha / (1.0 + alpha * g.norm()));
        let scale = plain.max_abs().max(1e-300);
        let err = plain.sub(&corr)?.sub(&tamed)?.max_abs() / scale;
        worst = worst.max(err);
        if err > 1e-12 {
            bad += 1;
        }
    }
    Ok(CheckOutcome::new(
        "tamed increment decomposition",
        cases,
        bad,
        format!("worst relative gap {worst:.3e}"),
    ))
}

/// Both sides of the tamed-operator identity agree to `1e-10·max(1, ‖g(w)‖)`.
pub fn check_operator_identity(cases: u64) -> Result<CheckOutcome> {
    let mut rng = RngStream::new(SUITE_SEED, 3);
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let alpha = log_uniform(&mut rng, 1e-3, 1e3);
        let xi = rng.random_range(0.0..=100.0);
        let dim = rng.random_range(1..=8);
        let g_w_norm = rng.random_range(0.0..=100.0);
        let g_w = random_vector(&mut rng, dim, g_w_norm);
        let g_z = rng.random_range(0.0..=100.0);
        let w_norm = rng.random_range(0.0..=10.0);
        let w = random_vector(&mut rng, dim, w_norm);
        let (lhs, rhs) = second_lip_identity_sides(alpha, xi, &g_w, g_z, &w)?;
        let gap = (lhs - rhs).abs() / g_w.norm().max(1.0);
        worst = worst.max(gap);
        if gap > 1e-10 {
            bad += 1;
        }
    }
    Ok(CheckOutcome::new(
        "tamed operator identity",
        cases,
        bad,
        format!("worst scaled gap {worst:.3e}"),
    ))
}

/// `x` grid for offset `y`: ten evenly spaced values in `[0.1, 1 + y]` plus `x = 1`.
fn x_grid(y: f64) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..10).map(|k| 0.1 + (1.0 + y - 0.1) * k as f64 / 9.0).collect();
    xs.push(1.0);
    xs
}

const Y_GRID: [f64; 4] = [0.1, 1.0, 5.0, 10.0];
const N_MAX: u64 = 300;

/// Harmonic-type products never exceed their power-law bound.
pub fn check_product_bound() -> Result<CheckOutcome> {
    let (mut cases, mut bad) = (0, 0);
    for y in Y_GRID {
        for x in x_grid(y) {
            for n in 1..=N_MAX {
                for m in [1, n.div_ceil(2), n + 1] {
                    let (p, b) = algebraic_bound_product(x, y, m, n)?;
                    cases += 1;
                    if p > b * (1.0 + 1e-12) {
                        bad += 1;
                    }
                }
            }
        }
    }
    Ok(CheckOutcome::new("harmonic product bound", cases, bad, String::new()))
}

/// Weighted harmonic sums never exceed their three-branch bound.
pub fn check_sum_bound() -> Result<CheckOutcome> {
    let (mut cases, mut bad) = (0, 0);
    let mut tightest = f64::INFINITY;
    for y in Y_GRID {
        for x in x_grid(y) {
            for n in 1..=N_MAX {
                let (v, b) = algebraic_bound_sum(x, y, n)?;
                cases += 1;
                tightest = tightest.min(b / v);
                if v > b * (1.0 + 1e-12) {
                    bad += 1;
                }
            }
        }
    }
    Ok(CheckOutcome::new(
        "harmonic sum bound",
        cases,
        bad,
        format!("smallest bound/value ratio {tightest:.4}"),
    ))
}

/// Tangent-line bound on `−1/(ax+b)` over a log-spaced `10×10×10` grid in `[1e-3, 1e3]³`.
pub fn check_tangent_bound() -> Result<CheckOutcome> {
    let grid: Vec<f64> = (0..10).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 9.0)).collect();
    let (mut cases, mut bad) = (0, 0);
    for &a in &grid {
        for &b in &grid {
            for &x in &grid {
                let (l, r) = taylor_inequality(a, b, x)?;
                cases += 1;
                if l > r + 1e-15 * r.abs().max(1.0 / b) {
                    bad += 1;
                }
            }
        }
    }
    Ok(CheckOutcome::new("tangent line bound", cases, bad, String::new()))
}

/// The higher-moment envelope is nonincreasing in `n` when `2ϑμ ≥ 1` and `γ ≥ 1`.
pub fn check_monotone_envelope() -> Result<CheckOutcome> {
    let (mut cases, mut bad) = (0, 0);
    for x in [1.0, 1.5, 2.0, 4.0, 10.0] {
        for gamma in [1.0, 2.0, 10.0, 100.0] {
            for (k, init) in [(1.0, 0.0), (0.0, 1.0), (3.0, 5.0)] {
                let (theta, mu) = (x / 2.0, 1.0);
                let mut prev = theorem1_envelope(1, theta, gamma, mu, k, init)?;
                for n in 2..=1000 {
                    let v = theorem1_envelope(n, theta, gamma, mu, k, init)?;
                    cases += 1;
                    if v > prev * (1.0 + 1e-14) {
                        bad += 1;
                    }
                    prev = v;
                }
            }
        }
    }
    Ok(CheckOutcome::new("envelope nonincreasing in n", cases, bad, String::new()))
}

fn sample_configs() -> Vec<ExperimentConfig> {
    let streaming = ExperimentConfig {
        problem: ProblemSpec::Quadratic {
            diag: DiagSpec::LogSpaced { dim: 5, min: 0.5, max: 20.0 },
            target: Some(vec![1.0, -2.0, 0.5, 3.0, 0.0]),
            noise_sigma: 1.0,
            noise_kind: NoiseKind::Gaussian,
            pool: None,
        },
        schedule: StepSchedule::Harmonic { theta: 2.0, gamma: 1.0 },
        optimizer: Method::Tsgd,
        n_steps: 2000,
        n_paths: 8,
        record_every: 1,
        seed: SUITE_SEED,
        initial: Some(vec![30.0, 30.0, -30.0, 0.0, 10.0]),
        reference: None,
        output: None,
    };
    let pooled = ExperimentConfig {
        problem: ProblemSpec::Quadratic {
            diag: DiagSpec::Values(vec![1.0, 100.0]),
            target: None,
            noise_sigma: 5.0,
            noise_kind: NoiseKind::BoundedUniform,
            pool: Some(PoolSpec {
                n_samples: 64,
                batch_size: 4,
                seed: 3,
            }),
        },
        schedule: StepSchedule::Constant { value: 0.5 },
        record_every: 7,
        n_steps: 3000,
        initial: Some(vec![20.0, -20.0]),
        ..streaming.clone()
    };
    vec![streaming, pooled]
}

/// Pathwise distance bound and objective-gap sandwich on sample TSGD runs.
pub fn check_sample_runs() -> Result<CheckOutcome> {
    let mut traces = 0;
    let mut bad = 0;
    let mut worst = f64::NEG_INFINITY;
    for cfg in sample_configs() {
        let out = run_paths(&cfg)?;
        traces += out.audit.pathwise_traces;
        bad += out.audit.pathwise_violations + out.audit.sandwich_violations;
        worst = worst.max(out.audit.worst_pathwise_slack);
    }
    Ok(CheckOutcome::new(
        "pathwise distance bound on sample runs",
        traces,
        bad,
        format!("worst slack {worst:.3e}"),
    ))
}

/// The whole suite at its standard sizes.
pub fn run_property_suite() -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_taming_sandwich(100_000)?,
        check_decomposition(10_000)?,
        check_operator_identity(10_000)?,
        check_product_bound()?,
        check_sum_bound()?,
        check_tangent_bound()?,
        check_monotone_envelope()?,
        check_sample_runs()?,
    ])
}
