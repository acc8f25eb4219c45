//! Multi-path Monte Carlo runs, aggregation, rate fitting, step-offset sweeps
//! and CSV output.

mod audit;
mod config;
mod csv;
pub mod verify;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{ParamVector, RngStream, StochasticGradientOracle};
use crate::error::{Error, Result};
use crate::optimizers::{Method, OptimizerState, StepSchedule};
use crate::problems::{reference_solution, ReferenceSolution};

pub use audit::{audit_snapshot, AuditReport};
pub use config::{build_problem, BuiltProblem, DiagSpec, ExperimentConfig, PoolSpec, ProblemSpec};
pub use csv::{
    read_aggregate_csv, read_sweep_csv, write_aggregate_csv, write_aggregate_csv_file, write_sweep_csv,
    write_sweep_csv_file, AGGREGATE_HEADER, SWEEP_HEADER,
};

/// A run is flagged and truncated once any coordinate exceeds this magnitude.
pub const DIVERGENCE_GUARD: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub n: u64,
    pub alpha: f64,
    /// `‖gₙ‖` of the draw used at step `n`.
    pub grad_norm: f64,
    /// `‖w^{n+1} − wⁿ‖`.
    pub step_length: f64,
    /// `‖w^{n+1} − w*‖²`.
    pub err_sq: Option<f64>,
    /// `F(w^{n+1})`.
    pub f_value: Option<f64>,
    /// `Σ_{i≤n} min{1, αᵢ‖gᵢ‖}`, accumulated over every step including unrecorded ones.
    pub taming_budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub path_index: u64,
    pub method: Method,
    pub initial_err_sq: Option<f64>,
    pub initial_f_value: Option<f64>,
    pub records: Vec<TraceRecord>,
    /// Step at which the divergence guard fired; the trace ends there.
    pub diverged_at: Option<u64>,
}

/// Mean and standard error across paths at one recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n: u64,
    pub alpha: f64,
    pub mean_err_sq: f64,
    pub se_err_sq: f64,
    pub mean_f_gap: f64,
    pub se_f_gap: f64,
}

pub struct RunOutput {
    pub traces: Vec<RunTrace>,
    pub aggregate: Vec<AggregateRow>,
    pub reference: ReferenceSolution,
    pub initial: ParamVector,
    pub audit: AuditReport,
}

impl RunOutput {
    pub fn any_diverged(&self) -> bool {
        self.traces.iter().any(|t| t.diverged_at.is_some())
    }
}

fn should_record(n: u64, cfg: &ExperimentConfig) -> bool {
    n % cfg.record_every == 0 || n == cfg.n_steps
}

fn run_single_path(
    cfg: &ExperimentConfig,
    problem: &dyn StochasticGradientOracle,
    initial: &ParamVector,
    reference: &ReferenceSolution,
    path_index: u64,
) -> Result<RunTrace> {
    let mut sampler = problem.sampler(RngStream::new(cfg.seed, path_index))?;
    let mut state = OptimizerState::new(initial.clone(), cfg.schedule)?;
    let err_of = |w: &ParamVector| w.distance_sq(&reference.w_star);
    let f_of = |w: &ParamVector| problem.objective(w).ok();

    let mut trace = RunTrace {
        path_index,
        method: cfg.optimizer,
        initial_err_sq: Some(err_of(initial)?),
        initial_f_value: f_of(initial),
        records: Vec::new(),
        diverged_at: None,
    };
    let mut budget = 0.0;
    for n in 1..=cfg.n_steps {
        let draw = sampler.next_draw()?;
        let g = problem.gradient_at(&draw, &state.iterate)?;
        if !g.is_finite() {
            trace.diverged_at = Some(n);
            break;
        }
        let info = state.apply(cfg.optimizer, &g)?;
        budget += (info.alpha * info.grad_norm).min(1.0);
        let blown = !state.iterate.is_finite() || state.iterate.max_abs() > DIVERGENCE_GUARD;
        if blown || should_record(n, cfg) {
            trace.records.push(TraceRecord {
                n,
                alpha: info.alpha,
                grad_norm: info.grad_norm,
                step_length: info.step_length,
                err_sq: Some(err_of(&state.iterate)?),
                f_value: if blown { None } else { f_of(&state.iterate) },
                taming_budget: budget,
            });
        }
        if blown {
            trace.diverged_at = Some(n);
            break;
        }
    }
    Ok(trace)
}

/// Mean and standard error (sample standard deviation over `√P`).
fn mean_se(values: &[f64]) -> (f64, f64) {
    let p = values.len() as f64;
    let mean = values.iter().sum::<f64>() / p;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (p - 1.0);
    (mean, (var / p).sqrt())
}

/// Per-step mean and standard error over the recorded steps every path reached.
pub fn aggregate_traces(traces: &[RunTrace], f_star: f64) -> Vec<AggregateRow> {
    let Some(first) = traces.first() else {
        return Vec::new();
    };
    let shared = |k: usize| {
        traces.iter().all(|t| {
            t.records.get(k).is_some_and(|r| r.n == first.records[k].n)
                && t.diverged_at.is_none_or(|d| d > first.records[k].n)
        })
    };
    let mut rows = Vec::new();
    for k in 0..first.records.len() {
        if !shared(k) {
            break;
        }
        let errs: Vec<f64> = traces.iter().map(|t| t.records[k].err_sq.unwrap_or(f64::NAN)).collect();
        let gaps: Vec<f64> = traces
            .iter()
            .map(|t| t.records[k].f_value.map_or(f64::NAN, |f| f - f_star))
            .collect();
        let (mean_err_sq, se_err_sq) = mean_se(&errs);
        let (mean_f_gap, se_f_gap) = mean_se(&gaps);
        rows.push(AggregateRow {
            n: first.records[k].n,
            alpha: first.records[k].alpha,
            mean_err_sq,
            se_err_sq,
            mean_f_gap,
            se_f_gap,
        });
    }
    rows
}

/// Runs `cfg.n_paths` independent paths in parallel (path `p` draws from stream `p`
/// of the master seed), aggregates them and audits every trace.
pub fn run_paths(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let built = build_problem(cfg)?;
    run_built(cfg, &built)
}

/// [`run_paths`] on an already constructed problem.
pub fn run_built(cfg: &ExperimentConfig, built: &BuiltProblem) -> Result<RunOutput> {
    let reference = reference_solution(built.oracle.as_ref(), &built.initial, &cfg.reference_options())?;
    run_with_reference(cfg, built, reference)
}

/// [`run_built`] measuring errors against a given minimizer.
pub fn run_with_reference(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    reference: ReferenceSolution,
) -> Result<RunOutput> {
    cfg.validate()?;
    let problem = built.oracle.as_ref();
    let traces = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| run_single_path(cfg, problem, &built.initial, &reference, p))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate_traces(&traces, reference.f_star);
    let audit = audit::audit_run(&traces, &built.initial, &reference, built.curvature)?;
    Ok(RunOutput {
        traces,
        aggregate,
        reference,
        initial: built.initial.clone(),
        audit,
    })
}

/// Least-squares slope of `ln(mean_err_sq)` against `ln n` over `n_min ≤ n ≤ n_max`.
pub fn fit_rate(rows: &[AggregateRow], n_min: u64, n_max: u64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.n >= n_min && r.n <= n_max)
        .map(|r| (r.n as f64, r.mean_err_sq))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} recorded points in [{n_min}, {n_max}], at least 10 needed",
            pts.len()
        )));
    }
    if let Some((n, m)) = pts.iter().find(|(_, m)| !(*m > 0.0 && m.is_finite())) {
        return Err(Error::InsufficientData(format!("mean error {m} at n = {n} is not positive")));
    }
    let k = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, m)| m.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub optimizer: Method,
    /// Mean squared error at the last step, infinite when a path diverged.
    pub final_err: f64,
    /// Largest mean squared error over the recorded steps, infinite when a path diverged.
    pub max_err: f64,
    pub diverged: bool,
}

/// Summary row of one finished run.
pub fn summarize(gamma: f64, optimizer: Method, out: &RunOutput) -> SweepRow {
    let diverged = out.any_diverged();
    let (final_err, max_err) = if diverged {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let initial = out.traces.iter().filter_map(|t| t.initial_err_sq).sum::<f64>() / out.traces.len() as f64;
        let last = out.aggregate.last().map_or(initial, |r| r.mean_err_sq);
        let max = out.aggregate.iter().map(|r| r.mean_err_sq).fold(f64::NEG_INFINITY, f64::max);
        (last, max)
    };
    SweepRow {
        gamma,
        optimizer,
        final_err,
        max_err,
        diverged,
    }
}

/// Runs the base configuration for every step offset `γ` and optimizer.
/// The schedule must be harmonic.
pub fn gamma_sweep(base: &ExperimentConfig, gammas: &[f64], optimizers: &[Method]) -> Result<Vec<SweepRow>> {
    if gammas.is_empty() || optimizers.is_empty() {
        return Err(Error::Config("sweep needs at least one gamma and one optimizer".into()));
    }
    if !matches!(base.schedule, StepSchedule::Harmonic { .. }) {
        return Err(Error::Config("gamma sweep needs a harmonic schedule".into()));
    }
    let built = build_problem(base)?;
    let reference = reference_solution(built.oracle.as_ref(), &built.initial, &base.reference_options())?;
    let mut rows = Vec::with_capacity(gammas.len() * optimizers.len());
    for &gamma in gammas {
        let schedule = base.schedule.with_gamma(gamma);
        for &optimizer in optimizers {
            let cfg = ExperimentConfig {
                schedule,
                optimizer,
                ..base.clone()
            };
            cfg.validate()?;
            let out = run_with_reference(&cfg, &built, reference.clone())?;
            rows.push(summarize(gamma, optimizer, &out));
        }
    }
    Ok(rows)
}
