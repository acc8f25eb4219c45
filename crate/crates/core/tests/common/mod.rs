#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use tsgd_core::data_io::SparseDataset;
use tsgd_core::experiment::{DiagSpec, ExperimentConfig, ProblemSpec};
use tsgd_core::problems::NoiseKind;
use tsgd_core::{Method, ParamVector, RngStream, StepSchedule};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn normal(rng: &mut RngStream) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_point(rng: &mut RngStream, dim: usize, scale: f64) -> ParamVector {
    (0..dim).map(|_| scale * normal(rng)).collect::<Vec<_>>().into()
}

/// About half the entries of each row nonzero, labels ±1 at random.
pub fn random_dataset(rng: &mut RngStream, n: usize, d: usize) -> Arc<SparseDataset> {
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| if rng.random_bool(0.5) { normal(rng) } else { 0.0 })
                .collect()
        })
        .collect();
    let labels = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    Arc::new(SparseDataset::from_dense(&features, labels).unwrap())
}

pub fn random_batch(rng: &mut RngStream, n: usize) -> Vec<usize> {
    let mut b: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.6)).collect();
    if b.is_empty() {
        b.push(rng.random_range(0..n));
    }
    b
}

/// Largest `‖fd − g‖ / max(‖g‖, ‖fd‖)` against central differences of `value`.
pub fn finite_difference_error(value: impl Fn(&ParamVector) -> f64, w: &ParamVector, grad: &ParamVector) -> f64 {
    let mut fd = vec![0.0; w.len()];
    for i in 0..w.len() {
        let h = 1e-5 * w[i].abs().max(1.0);
        let mut plus = w.clone();
        plus.as_mut_slice()[i] += h;
        let mut minus = w.clone();
        minus.as_mut_slice()[i] -= h;
        fd[i] = (value(&plus) - value(&minus)) / (2.0 * h);
    }
    let fd: ParamVector = fd.into();
    let diff = fd.sub(grad).unwrap().norm();
    let scale = grad.norm().max(fd.norm());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Noisy ten-dimensional quadratic, harmonic schedule with `ϑ = 2`, `γ = 1`.
pub fn rate_config(n_paths: usize, n_steps: u64, record_every: u64) -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemSpec::Quadratic {
            diag: DiagSpec::LogSpaced { dim: 10, min: 1.0, max: 10.0 },
            target: Some(vec![1.0; 10]),
            noise_sigma: 1.0,
            noise_kind: NoiseKind::Gaussian,
            pool: None,
        },
        schedule: StepSchedule::harmonic(2.0, 1.0).unwrap(),
        optimizer: Method::Tsgd,
        n_steps,
        n_paths,
        record_every,
        seed: 20240601,
        initial: Some(vec![0.0; 10]),
        reference: None,
        output: None,
    }
}
