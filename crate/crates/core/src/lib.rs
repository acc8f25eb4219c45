//! Tamed stochastic gradient descent (TSGD) with classical SGD as baseline.
//!
//! The tamed update rescales the stochastic gradient step by `1 / (1 + α‖g‖)`:
//!
//! ```text
//! w⁺ = w − α g / (1 + α ‖g‖)
//! ```
//!
//! so that every increment has norm below one, however large the step size.
//! Alongside the optimizers the crate ships strongly convex test problems with
//! known constants, LIBSVM ingestion with epoch batching, executable forms of
//! the a priori and convergence bounds, and a seeded Monte Carlo harness.

pub mod base;
pub mod data_io;
pub mod error;
pub mod experiment;
pub mod optimizers;
pub mod problems;
pub mod theory;

pub use base::{
    finite_sum_gradient_identity, vec_norm, Draw, DrawSampler, ParamVector, ProblemConstants,
    RngStream, StochasticGradientOracle,
};
pub use error::{Error, Result};
pub use optimizers::{Method, OptimizerState, StepSchedule};
