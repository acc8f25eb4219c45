//! Executable forms of the a priori bounds, the convergence envelopes and the
//! auxiliary inequalities behind them. Every function is pure.
//!
//! All three convergence envelopes share one shape, parameterized by a
//! contraction exponent `x` and an offset `y`:
//!
//! ```text
//! e₀ (1+y)^x (n+1+y)^{-x} + exp(x/(1+y)) K' · { (n+1+y)^{-1} / (x-1)                       x > 1
//!                                              { (n+1+y)^{-1} (1 + ln(n+y))                  x = 1
//!                                              { (n+1+y)^{-x} (1+y)^{x-2} (x-2-y) / (x-1)    x < 1
//! ```

use serde::{Deserialize, Serialize};

use crate::base::{vec_norm, ParamVector, ProblemConstants};
use crate::error::{Error, Result};
use crate::experiment::RunTrace;
use crate::optimizers::tamed_coefficient;

/// Exponents within this distance of one use the logarithmic branch.
pub const LOG_BRANCH_TOL: f64 = 1e-12;

/// Minimum number of sample paths for the empirical a priori constants.
pub const MIN_PATHS_FOR_ESTIMATES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantsSource {
    Empirical,
    UserSupplied,
}

/// Constants entering the convergence envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    /// Uniform bound on `E‖wⁿ − w*‖²`.
    pub m2: f64,
    /// Uniform bound on `E‖wⁿ − w*‖⁴`.
    pub m4: f64,
    pub k: f64,
    pub c: f64,
    pub phi: f64,
    pub xi_cap: f64,
    pub source: ConstantsSource,
}

impl TheoremConstants {
    pub fn user_supplied(m2: f64, m4: f64) -> Result<Self> {
        let c = Self {
            m2,
            m4,
            k: 0.0,
            c: 0.0,
            phi: 0.0,
            xi_cap: 0.0,
            source: ConstantsSource::UserSupplied,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m2", self.m2),
            ("m4", self.m4),
            ("k", self.k),
            ("c", self.c),
            ("phi", self.phi),
            ("xi_cap", self.xi_cap),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.source == ConstantsSource::Empirical && self.m2 * self.m2 > self.m4 * (1.0 + 1e-12) {
            return Err(Error::param(format!(
                "empirical constants violate m2² <= m4 ({} > {})",
                self.m2 * self.m2,
                self.m4
            )));
        }
        Ok(())
    }
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `T_{α f, z}(w) = w − α g(w) / (1 + α‖g(z)‖)`. With `z = w` this is one TSGD step.
pub fn t_operator(
    alpha: f64,
    grad_at_w: &ParamVector,
    grad_at_z_norm: f64,
    w: &ParamVector,
) -> Result<ParamVector> {
    check_finite(&[alpha, grad_at_z_norm], "T operator scalars")?;
    if !grad_at_w.is_finite() || !w.is_finite() {
        return Err(Error::NonFinite("T operator vectors"));
    }
    if alpha <= 0.0 || grad_at_z_norm < 0.0 {
        return Err(Error::param("T operator needs alpha > 0 and ‖g(z)‖ >= 0"));
    }
    w.check_dim(grad_at_w)?;
    let coeff = tamed_coefficient(alpha, grad_at_z_norm);
    Ok(w
        .iter()
        .zip(grad_at_w.iter())
        .map(|(wi, gi)| wi - coeff * gi)
        .collect::<Vec<_>>()
        .into())
}

/// `|LHS − RHS|` for the identity
/// `‖T(w) − w + αg(w)/(1+αΞ)‖ = α²|Ξ − ‖g(z)‖| ‖g(w)‖ / ((1+α‖g(z)‖)(1+αΞ))`.
pub fn second_lip_identity_gap(
    alpha: f64,
    xi_cap: f64,
    grad_at_w: &ParamVector,
    grad_at_z_norm: f64,
    w: &ParamVector,
) -> Result<f64> {
    let (lhs, rhs) = second_lip_identity_sides(alpha, xi_cap, grad_at_w, grad_at_z_norm, w)?;
    Ok((lhs - rhs).abs())
}

/// Both sides of the identity checked by [`second_lip_identity_gap`].
pub fn second_lip_identity_sides(
    alpha: f64,
    xi_cap: f64,
    grad_at_w: &ParamVector,
    grad_at_z_norm: f64,
    w: &ParamVector,
) -> Result<(f64, f64)> {
    check_finite(&[xi_cap], "Ξ")?;
    if xi_cap < 0.0 {
        return Err(Error::param("Ξ must be >= 0"));
    }
    let t = t_operator(alpha, grad_at_w, grad_at_z_norm, w)?;
    let shift = alpha / (1.0 + alpha * xi_cap);
    let residual: ParamVector = t
        .iter()
        .zip(w.iter().zip(grad_at_w.iter()))
        .map(|(ti, (wi, gi))| ti - wi + shift * gi)
        .collect::<Vec<_>>()
        .into();
    let lhs = residual.norm();
    let rhs = alpha * alpha * (xi_cap - grad_at_z_norm).abs() * grad_at_w.norm()
        / ((1.0 + alpha * grad_at_z_norm) * (1.0 + alpha * xi_cap));
    Ok((lhs, rhs))
}

/// Worst slack of `‖w^{n+1} − w*‖ ≤ ‖w₁ − w*‖ + Σ_{i≤n} min{1, αᵢ‖gᵢ‖}` over a trace.
///
/// A dense trace (every step recorded) has the sum re-accumulated from its
/// `alpha` and `grad_norm` fields; a thinned trace relies on the stored running sums.
pub fn pathwise_bound_check(trace: &RunTrace, w_star: &ParamVector, w1: &ParamVector) -> Result<f64> {
    let start = vec_norm(&w1.sub(w_star)?)?;
    let dense = trace
        .records
        .iter()
        .enumerate()
        .all(|(k, r)| r.n == k as u64 + 1);
    let mut replayed = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for r in &trace.records {
        let err_sq = r.err_sq.ok_or(Error::MissingTraceField("err_sq"))?;
        let used = if dense {
            replayed += (r.alpha * r.grad_norm).min(1.0);
            replayed
        } else {
            r.taming_budget
        };
        worst = worst.max(err_sq.sqrt() - start - used);
    }
    if trace.records.is_empty() {
        return Err(Error::MissingTraceField("records"));
    }
    Ok(worst)
}

fn envelope_branch(n: f64, x: f64, y: f64) -> f64 {
    let tail = n + 1.0 + y;
    if (x - 1.0).abs() <= LOG_BRANCH_TOL {
        (1.0 + (n + y).ln()) / tail
    } else if x > 1.0 {
        1.0 / (tail * (x - 1.0))
    } else {
        tail.powf(-x) * (1.0 + y).powf(x - 2.0) * (x - 2.0 - y) / (x - 1.0)
    }
}

/// Shared envelope with contraction exponent `x`, offset `y`, initial
/// squared error `init` and noise weight `k`.
fn envelope(n: u64, x: f64, y: f64, init: f64, k: f64) -> f64 {
    let nf = n as f64;
    let first = if init == 0.0 {
        0.0
    } else {
        init * ((1.0 + y) / (nf + 1.0 + y)).powf(x)
    };
    let second = if k == 0.0 {
        0.0
    } else {
        (x / (1.0 + y)).exp() * k * envelope_branch(nf, x, y)
    };
    first + second
}

fn check_envelope_inputs(n: u64, theta: f64, gamma: f64, mu: f64, k: f64, init: f64) -> Result<()> {
    check_finite(&[theta, gamma, mu, k, init], "envelope parameters")?;
    if n < 1 {
        return Err(Error::param("n must be >= 1"));
    }
    if theta <= 0.0 || mu <= 0.0 {
        return Err(Error::param("theta and mu must be > 0"));
    }
    if gamma < 0.0 || k < 0.0 || init < 0.0 {
        return Err(Error::param("gamma, K and the initial error must be >= 0"));
    }
    Ok(())
}

/// Whether `ϑ ≤ (1+γ)/(2μ)`, the step-size regime of the higher-moment bound.
pub fn theorem1_admissible(theta: f64, gamma: f64, mu: f64) -> bool {
    2.0 * theta * mu <= (1.0 + gamma) * (1.0 + 1e-12)
}

/// Envelope of the higher-moment bound evaluated for any `ϑ > 0`, without the regime check.
pub fn theorem1_envelope(n: u64, theta: f64, gamma: f64, mu: f64, k: f64, init_err_sq: f64) -> Result<f64> {
    check_envelope_inputs(n, theta, gamma, mu, k, init_err_sq)?;
    Ok(envelope(n, 2.0 * theta * mu, gamma, init_err_sq, k))
}

/// Bound on `E‖w^{n+1} − w*‖²` for `α_n = ϑ/(n+γ)` under the higher-moment assumptions.
/// Rejects `ϑ` outside `(0, (1+γ)/(2μ)]`.
pub fn theorem1_bound(n: u64, theta: f64, gamma: f64, mu: f64, k: f64, init_err_sq: f64) -> Result<f64> {
    check_envelope_inputs(n, theta, gamma, mu, k, init_err_sq)?;
    if !theorem1_admissible(theta, gamma, mu) {
        return Err(Error::param(format!(
            "theta {theta} exceeds (1+gamma)/(2mu) = {}",
            (1.0 + gamma) / (2.0 * mu)
        )));
    }
    Ok(envelope(n, 2.0 * theta * mu, gamma, init_err_sq, k))
}

/// `K = 2ϑ²Lμ₂M₄^{3/4} + 2ϑ²(L² + Lσ + μ₂σ)M₂ + 2ϑ²σ²M₂^{1/2} + 2ϑ²σ²`.
pub fn theorem1_k(theta: f64, c: &ProblemConstants, m2: f64, m4: f64) -> f64 {
    let t2 = 2.0 * theta * theta;
    let (l, mu2, s) = (c.lipschitz, c.mu2, c.sigma);
    t2 * l * mu2 * m4.powf(0.75) + t2 * (l * l + l * s + mu2 * s) * m2 + t2 * s * s * m2.sqrt() + t2 * s * s
}

/// `C = 2γϑμ / (γ + ϑL‖w₁ − w*‖ + γϑL + ϑσ*)` for draws with deterministic
/// `(μ_ξ, L_ξ, ‖∇f(ξ, w*)‖)`.
pub fn theorem2_constant_c(
    theta: f64,
    gamma: f64,
    mu: f64,
    lipschitz: f64,
    sigma_at_star: f64,
    init_dist: f64,
) -> Result<f64> {
    let inputs = [theta, gamma, mu, lipschitz, sigma_at_star, init_dist];
    check_finite(&inputs, "constant C inputs")?;
    if inputs.iter().any(|v| *v < 0.0) {
        return Err(Error::param("constant C inputs must be >= 0"));
    }
    let denom = gamma + theta * lipschitz * init_dist + gamma * theta * lipschitz + theta * sigma_at_star;
    if denom <= 0.0 {
        return Err(Error::param("constant C has a zero denominator"));
    }
    Ok(2.0 * gamma * theta * mu / denom)
}

/// Monte Carlo form of `C` from samples `(μ_ξ, L_ξ, ‖∇f(ξ, w*)‖)`.
pub fn theorem2_constant_c_sampled(
    theta: f64,
    gamma: f64,
    init_dist: f64,
    draws: &[(f64, f64, f64)],
) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::InsufficientData("no draws for constant C".into()));
    }
    let mut sum = 0.0;
    for &(mu, l, g) in draws {
        sum += theorem2_constant_c(theta, gamma, mu, l, g, init_dist)?;
    }
    Ok(sum / draws.len() as f64)
}

/// `K = 2ϑ²((L² + Lσ)M₂ + σ² + σ²M₂^{1/2})`.
pub fn theorem2_k(theta: f64, lipschitz: f64, sigma: f64, m2: f64) -> f64 {
    2.0 * theta * theta * ((lipschitz * lipschitz + lipschitz * sigma) * m2 + sigma * sigma + sigma * sigma * m2.sqrt())
}

/// Envelope with exponent `C`; requires `C ∈ (0, 1+γ]`.
pub fn theorem2_bound(n: u64, gamma: f64, c: f64, k: f64, init_err_sq: f64) -> Result<f64> {
    check_finite(&[gamma, c, k, init_err_sq], "envelope parameters")?;
    if n < 1 || gamma < 0.0 || k < 0.0 || init_err_sq < 0.0 {
        return Err(Error::param("n >= 1 and gamma, K, initial error >= 0 required"));
    }
    if !(c > 0.0 && c <= (1.0 + gamma) * (1.0 + 1e-12)) {
        return Err(Error::param(format!("C = {c} outside (0, 1 + gamma]")));
    }
    Ok(envelope(n, c, gamma, init_err_sq, k))
}

/// Bounded-gradient envelope: offset `γ + ϑB` and noise weight `ϑ²K`.
/// Requires `1 + γ ≥ ϑ(2μ − B)`.
pub fn theorem3_bound(
    n: u64,
    theta: f64,
    gamma: f64,
    mu: f64,
    b_bound: f64,
    k: f64,
    init_err_sq: f64,
) -> Result<f64> {
    check_envelope_inputs(n, theta, gamma, mu, k, init_err_sq)?;
    check_finite(&[b_bound], "gradient bound")?;
    if b_bound < 0.0 {
        return Err(Error::param("gradient bound must be >= 0"));
    }
    if 1.0 + gamma < theta * (2.0 * mu - b_bound) * (1.0 - 1e-12) {
        return Err(Error::param(format!(
            "1 + gamma = {} is below theta (2 mu - B) = {}",
            1.0 + gamma,
            theta * (2.0 * mu - b_bound)
        )));
    }
    Ok(envelope(n, 2.0 * theta * mu, gamma + theta * b_bound, init_err_sq, theta * theta * k))
}

/// `K = (4 + 6D²)B² + 2(B²D + σB)M₂^{1/2}`; the envelope multiplies it by `ϑ²`.
pub fn theorem3_k(b_bound: f64, noise_ratio: f64, sigma: f64, m2: f64) -> f64 {
    let (b, d) = (b_bound, noise_ratio);
    (4.0 + 6.0 * d * d) * b * b + 2.0 * (b * b * d + sigma * b) * m2.sqrt()
}

/// Slacks `(L/2·‖w − w*‖² − gap, gap − μ/2·‖w − w*‖²)` with `gap = F(w) − F(w*)`.
pub fn f_gap_sandwich(f_at_w: f64, f_at_star: f64, dist_sq: f64, mu: f64, lipschitz: f64) -> Result<(f64, f64)> {
    check_finite(&[f_at_w, f_at_star, dist_sq, mu, lipschitz], "sandwich inputs")?;
    if mu < 0.0 || mu > lipschitz || dist_sq < 0.0 {
        return Err(Error::param("sandwich needs 0 <= mu <= L and dist_sq >= 0"));
    }
    let gap = f_at_w - f_at_star;
    if gap < -1e-9 * f_at_star.abs().max(1.0) {
        return Err(Error::param(format!("F(w) below F(w*) by {}", -gap)));
    }
    Ok((0.5 * lipschitz * dist_sq - gap, gap - 0.5 * mu * dist_sq))
}

fn check_algebraic(x: f64, y: f64) -> Result<()> {
    check_finite(&[x, y], "algebraic bound inputs")?;
    if x <= 0.0 || y <= 0.0 {
        return Err(Error::param("x and y must be > 0"));
    }
    if x / (1.0 + y) > 1.0 + 1e-12 {
        return Err(Error::param(format!("x/(1+y) = {} exceeds 1", x / (1.0 + y))));
    }
    Ok(())
}

/// `(Π_{i=m}^{n} (1 − x/(i+y)), ((n+1+y)/(m+y))^{−x})`; the product never exceeds the bound.
pub fn algebraic_bound_product(x: f64, y: f64, m: u64, n: u64) -> Result<(f64, f64)> {
    check_algebraic(x, y)?;
    if m < 1 || m > n + 1 {
        return Err(Error::param(format!("need 1 <= m <= n + 1, got m = {m}, n = {n}")));
    }
    let product: f64 = (m..=n).map(|i| 1.0 - x / (i as f64 + y)).product();
    let bound = ((n as f64 + 1.0 + y) / (m as f64 + y)).powf(-x);
    Ok((product, bound))
}

/// `(Σ_{i=1}^{n} (i+y)^{−2} Π_{j=i+1}^{n} (1 − x/(j+y)), closed-form bound)`,
/// the left side evaluated by a plain double loop.
pub fn algebraic_bound_sum(x: f64, y: f64, n: u64) -> Result<(f64, f64)> {
    check_algebraic(x, y)?;
    if n < 1 {
        return Err(Error::param("n must be >= 1"));
    }
    let mut value = 0.0;
    for i in 1..=n {
        let mut prod = 1.0;
        for j in (i + 1)..=n {
            prod *= 1.0 - x / (j as f64 + y);
        }
        value += prod / ((i as f64 + y) * (i as f64 + y));
    }
    let bound = (x / (1.0 + y)).exp() * envelope_branch(n as f64, x, y);
    Ok((value, bound))
}

/// `(−1/(ax+b), −1/b + (a/b²)x)`: the tangent line at zero lies above the concave curve.
pub fn taylor_inequality(a: f64, b: f64, x: f64) -> Result<(f64, f64)> {
    check_finite(&[a, b, x], "Taylor inequality inputs")?;
    if a <= 0.0 || b <= 0.0 || x <= 0.0 {
        return Err(Error::param("a, b, x must be > 0"));
    }
    Ok((-1.0 / (a * x + b), -1.0 / b + a / (b * b) * x))
}

/// Empirical a priori constants from a family of traces on a common record grid:
/// `M₂ = maxₙ mean ‖w^{n+1} − w*‖²` and `M₄ = maxₙ mean ‖w^{n+1} − w*‖⁴`, where
/// the initial point counts as one of the `n`.
pub fn estimate_m2_m4(paths: &[RunTrace]) -> Result<TheoremConstants> {
    if paths.len() < MIN_PATHS_FOR_ESTIMATES {
        return Err(Error::InsufficientData(format!(
            "{} paths given, at least {MIN_PATHS_FOR_ESTIMATES} needed",
            paths.len()
        )));
    }
    let first = &paths[0];
    for p in paths {
        if p.diverged_at.is_some() {
            return Err(Error::InsufficientData("diverged trace in estimate".into()));
        }
        if p.records.len() != first.records.len()
            || p.records.iter().zip(&first.records).any(|(a, b)| a.n != b.n)
        {
            return Err(Error::InsufficientData("traces do not share a record grid".into()));
        }
    }
    let count = paths.len() as f64;
    let column = |get: &dyn Fn(&RunTrace) -> Result<f64>| -> Result<(f64, f64)> {
        let mut s2 = 0.0;
        let mut s4 = 0.0;
        for p in paths {
            let e = get(p)?;
            s2 += e;
            s4 += e * e;
        }
        Ok((s2 / count, s4 / count))
    };
    let (mut m2, mut m4) = column(&|p| p.initial_err_sq.ok_or(Error::MissingTraceField("initial_err_sq")))?;
    for k in 0..first.records.len() {
        let (a, b) = column(&|p| p.records[k].err_sq.ok_or(Error::MissingTraceField("err_sq")))?;
        m2 = m2.max(a);
        m4 = m4.max(b);
    }
    let c = TheoremConstants {
        m2,
        m4,
        k: 0.0,
        c: 0.0,
        phi: 0.0,
        xi_cap: 0.0,
        source: ConstantsSource::Empirical,
    };
    c.validate()?;
    Ok(c)
}
