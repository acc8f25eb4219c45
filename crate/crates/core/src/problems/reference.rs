use serde::{Deserialize, Serialize};

use crate::base::{ParamVector, RngStream, StochasticGradientOracle};
use crate::error::{Error, Result};
use crate::optimizers::{Method, OptimizerState, StepSchedule};

/// Settings for a long TSGD run whose lowest objective value stands in for `F(w*)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptions {
    pub budget: u64,
    pub schedule: StepSchedule,
    pub seed: u64,
    /// Full objective is evaluated every this many steps.
    pub eval_every: u64,
    /// Relative improvement over the last tenth of the budget above which
    /// the run counts as unconverged.
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub w_star: ParamVector,
    pub f_star: f64,
    /// True when `w_star` is the analytic minimizer.
    pub exact: bool,
}

/// Analytic minimizer when the problem has one, otherwise the best iterate
/// seen along a TSGD run of `opts.budget` steps from `initial`.
pub fn reference_solution(
    problem: &dyn StochasticGradientOracle,
    initial: &ParamVector,
    opts: &ReferenceOptions,
) -> Result<ReferenceSolution> {
    if let Some(w_star) = problem.exact_minimizer() {
        let f_star = problem.objective(&w_star)?;
        return Ok(ReferenceSolution {
            w_star,
            f_star,
            exact: true,
        });
    }
    if opts.budget < 10 || opts.eval_every == 0 {
        return Err(Error::param("reference run needs budget >= 10 and eval_every >= 1"));
    }
    let mut sampler = problem.sampler(RngStream::new(opts.seed, u64::MAX - 1))?;
    let mut state = OptimizerState::new(initial.clone(), opts.schedule)?;
    let mut best_w = initial.clone();
    let mut best_f = problem.objective(initial)?;
    let checkpoint = opts.budget - opts.budget / 10;
    let mut best_at_checkpoint = best_f;

    for n in 1..=opts.budget {
        let draw = sampler.next_draw()?;
        let g = problem.gradient_at(&draw, &state.iterate)?;
        state.apply(Method::Tsgd, &g)?;
        if n % opts.eval_every == 0 || n == opts.budget {
            let f = problem.objective(&state.iterate)?;
            if f < best_f {
                best_f = f;
                best_w.clone_from(&state.iterate);
            }
        }
        if n == checkpoint {
            best_at_checkpoint = best_f;
        }
    }

    let improvement = best_at_checkpoint - best_f;
    if improvement > opts.tol * best_f.abs().max(1.0) {
        return Err(Error::NotConverged(format!(
            "best objective still fell by {improvement:e} over the final tenth of {} steps",
            opts.budget
        )));
    }
    Ok(ReferenceSolution {
        w_star: best_w,
        f_star: best_f,
        exact: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{NoiseKind, QuadraticProblem};

    #[test]
    fn quadratic_reference_is_exact() {
        let p = QuadraticProblem::new(vec![1.0, 10.0], vec![3.0, -1.0].into(), 0.5, NoiseKind::Gaussian).unwrap();
        let opts = ReferenceOptions {
            budget: 100,
            schedule: StepSchedule::harmonic(1.0, 1.0).unwrap(),
            seed: 0,
            eval_every: 1,
            tol: 1e-9,
        };
        let r = reference_solution(&p, &ParamVector::zeros(2), &opts).unwrap();
        assert_eq!(r.w_star.as_slice(), &[3.0, -1.0]);
        assert_eq!(r.f_star, 0.0);
        assert!(r.exact);
    }
}
