#![allow(dead_code)]

use std::sync::Arc;

use esgd::driver::{train_single_baseline, BaselineConfig, EsgdConfig};
use esgd::evolution::EvolutionParams;
use esgd::fitness::{FitnessProblem, ProblemSpec};
use esgd::optimizer::{AnnealSchedule, OptimizerPool};
use esgd::ParamVector;

pub const SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

pub fn rastrigin10() -> ProblemSpec {
    ProblemSpec::Rastrigin {
        dim: 10,
        train_len: 1024,
    }
}

pub fn tiny_mlp() -> ProblemSpec {
    ProblemSpec::bn50_tiny(7, 2000, 1000)
}

/// Small-population settings: mu 16, lambda 64, rho 3, m 60%.
pub fn small_config(problem: ProblemSpec, seed: u64, generations: usize) -> EsgdConfig {
    let mu = 16;
    EsgdConfig {
        generations,
        sgd_steps: 1,
        evolution_steps: 1,
        finetune_epochs: 5,
        finetune_batch: 128,
        finetune_lr_divisor: 10.0,
        evolution: EvolutionParams {
            mu,
            lambda: 64,
            rho: 3,
            sigma: 0.001,
            sigma_decay: 1.0,
            p_anchor: 0.25,
            m: (0.6 * mu as f64).round() as usize,
        },
        optimizers: OptimizerPool::new(
            Some(AnnealSchedule::new(1e-4, 2e-3, 0.9)),
            Some(AnnealSchedule::new(1e-3, 1e-2, 0.9)),
        ),
        seed,
        problem,
        workers: 2,
    }
}

pub fn build(spec: &ProblemSpec) -> Arc<dyn FitnessProblem<f64>> {
    spec.build::<f64>().expect("valid problem")
}

/// Baseline rate that suits each desk problem.
pub fn baseline_lr(spec: &ProblemSpec) -> f64 {
    match spec {
        ProblemSpec::Mlp { .. } => 0.2,
        _ => 0.002,
    }
}

pub fn baseline_anchor(
    problem: &dyn FitnessProblem<f64>,
    spec: &ProblemSpec,
    seed: u64,
) -> ParamVector<f64> {
    let trace = train_single_baseline(problem, &BaselineConfig::new(baseline_lr(spec), seed))
        .expect("baseline runs");
    trace.params
}

/// A random (untrained) starting point for the anchor.
pub fn random_anchor(problem: &dyn FitnessProblem<f64>, seed: u64) -> ParamVector<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    ParamVector::new(problem.random_params(&mut rng))
}
