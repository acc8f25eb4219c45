use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::base::ParamVector;
use crate::error::Result;
use crate::optimizers::Method;
use crate::problems::ReferenceSolution;
use crate::theory::{f_gap_sandwich, pathwise_bound_check};

use super::RunTrace;

pub const PATHWISE_TOL: f64 = 1e-9;
pub const SANDWICH_TOL: f64 = 1e-9;

/// Invariant checks applied to every trace a run produces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// TSGD traces checked against the pathwise distance bound.
    pub pathwise_traces: u64,
    pub pathwise_violations: u64,
    pub worst_pathwise_slack: f64,
    /// Recorded steps checked against the objective-gap sandwich.
    pub sandwich_checks: u64,
    pub sandwich_violations: u64,
    /// Smallest sandwich slack divided by its scale.
    pub worst_sandwich_slack: f64,
}

impl Default for AuditReport {
    fn default() -> Self {
        Self {
            pathwise_traces: 0,
            pathwise_violations: 0,
            worst_pathwise_slack: f64::NEG_INFINITY,
            sandwich_checks: 0,
            sandwich_violations: 0,
            worst_sandwich_slack: f64::INFINITY,
        }
    }
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.pathwise_violations == 0 && self.sandwich_violations == 0
    }

    fn merge(&mut self, other: &AuditReport) {
        self.pathwise_traces += other.pathwise_traces;
        self.pathwise_violations += other.pathwise_violations;
        self.worst_pathwise_slack = self.worst_pathwise_slack.max(other.worst_pathwise_slack);
        self.sandwich_checks += other.sandwich_checks;
        self.sandwich_violations += other.sandwich_violations;
        self.worst_sandwich_slack = self.worst_sandwich_slack.min(other.worst_sandwich_slack);
    }
}

static GLOBAL: Mutex<Option<AuditReport>> = Mutex::new(None);

/// Totals over every run audited in this process so far.
pub fn audit_snapshot() -> AuditReport {
    GLOBAL.lock().unwrap_or_else(|e| e.into_inner()).unwrap_or_default()
}

pub(super) fn audit_run(
    traces: &[RunTrace],
    w1: &ParamVector,
    reference: &ReferenceSolution,
    curvature: Option<(f64, f64)>,
) -> Result<AuditReport> {
    let mut report = AuditReport::default();
    for t in traces {
        if t.method == Method::Tsgd && !t.records.is_empty() {
            let slack = pathwise_bound_check(t, &reference.w_star, w1)?;
            report.pathwise_traces += 1;
            report.worst_pathwise_slack = report.worst_pathwise_slack.max(slack);
            if !(slack <= PATHWISE_TOL) {
                report.pathwise_violations += 1;
            }
        }
        let Some((mu, lipschitz)) = curvature else {
            continue;
        };
        for r in &t.records {
            let (Some(f), Some(dist_sq)) = (r.f_value, r.err_sq) else {
                continue;
            };
            report.sandwich_checks += 1;
            let scale = 1f64.max(f.abs()).max(0.5 * lipschitz * dist_sq);
            let worst = match f_gap_sandwich(f, reference.f_star, dist_sq, mu, lipschitz) {
                Ok((upper, lower)) => upper.min(lower) / scale,
                Err(_) => f64::NEG_INFINITY,
            };
            report.worst_sandwich_slack = report.worst_sandwich_slack.min(worst);
            if !(worst >= -SANDWICH_TOL) {
                report.sandwich_violations += 1;
            }
        }
    }
    let mut global = GLOBAL.lock().unwrap_or_else(|e| e.into_inner());
    global.get_or_insert_with(AuditReport::default).merge(&report);
    Ok(report)
}
