//! Per-individual gradient phases, all with model back-off.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::EsgdConfig;
use crate::error::{Error, Result};
use crate::fitness::{evaluate_fitness, gradient, FitnessProblem};
use crate::optimizer::{sample_config, step_in_place, OptimizerConfig, OptimizerState};
use crate::params::ParamVector;
use crate::population::{Individual, Population};
use crate::rng::{substream, Stream, StreamRng};
use crate::scalar::Scalar;

/// One pass over the training set in shuffled minibatches.
pub fn train_epoch<T: Scalar, R: Rng + ?Sized>(
    problem: &dyn FitnessProblem<T>,
    config: &OptimizerConfig,
    params: &mut [T],
    state: &mut OptimizerState<T>,
    rng: &mut R,
) -> Result<()> {
    let mut order: Vec<usize> = (0..problem.train_len()).collect();
    order.shuffle(rng);
    for batch in order.chunks(config.batch_size.max(1)) {
        let g = gradient(problem, params, batch)?;
        step_in_place(config, state, params, &g)?;
    }
    Ok(())
}

/// Parameters, optimizer state and fitness after a kept pass.
type Kept<T> = (ParamVector<T>, OptimizerState<T>, T);

/// Outcome of one trial pass: `Some` if it was kept.
fn try_epoch<T: Scalar, R: Rng + ?Sized>(
    problem: &dyn FitnessProblem<T>,
    config: &OptimizerConfig,
    params: &ParamVector<T>,
    state: &OptimizerState<T>,
    current: T,
    rng: &mut R,
) -> Result<Option<Kept<T>>> {
    let mut p = params.clone();
    let mut s = state.clone();
    match train_epoch(problem, config, p.as_mut_slice(), &mut s, rng) {
        Ok(()) => {}
        Err(Error::NonFiniteGradient) => return Ok(None),
        Err(e) => return Err(e),
    }
    if !p.is_finite() {
        return Ok(None);
    }
    let f = evaluate_fitness(problem, &p)?;
    if f.fitness_key() <= current.fitness_key() {
        Ok(Some((p, s, f)))
    } else {
        Ok(None)
    }
}

/// Samples a fresh optimizer for zero-based generation `g` and runs `K_s`
/// passes, reverting any pass that worsens validation fitness.
pub fn sgd_phase<T: Scalar>(
    ind: &Individual<T>,
    cfg: &EsgdConfig,
    problem: &dyn FitnessProblem<T>,
    g: usize,
    rng: &mut StreamRng,
) -> Result<Individual<T>> {
    if ind.is_anchor {
        return Err(Error::config("sgd_phase", "the anchor is not trained"));
    }
    let config = sample_config(g, &cfg.optimizers, rng)?;
    let mut out = ind.clone();
    out.config = Some(config);
    out.opt_state.reset();
    let mut fitness = out.evaluated_fitness()?;
    for _ in 0..cfg.sgd_steps {
        if let Some((p, s, f)) =
            try_epoch(problem, &config, &out.params, &out.opt_state, fitness, rng)?
        {
            out.params = p;
            out.opt_state = s;
            fitness = f;
        }
    }
    out.fitness = Some(fitness);
    Ok(out)
}

/// Plain-SGD training where a worse epoch is undone and halves the rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BackoffTrace<T> {
    pub params: ParamVector<T>,
    pub initial_loss: T,
    /// Validation loss after each epoch (after any back-off).
    pub losses: Vec<T>,
    /// Rate used in each epoch.
    pub learning_rates: Vec<f64>,
    /// Whether each epoch was reverted.
    pub backed_off: Vec<bool>,
    /// Rate after the last epoch.
    pub final_lr: f64,
}

pub fn backoff_sgd<T: Scalar, R: Rng + ?Sized>(
    problem: &dyn FitnessProblem<T>,
    params: ParamVector<T>,
    initial_loss: T,
    lr0: f64,
    epochs: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<BackoffTrace<T>> {
    let mut trace = BackoffTrace {
        params,
        initial_loss,
        losses: Vec::with_capacity(epochs),
        learning_rates: Vec::with_capacity(epochs),
        backed_off: Vec::with_capacity(epochs),
        final_lr: lr0,
    };
    let mut loss = initial_loss;
    let mut lr = lr0;
    for _ in 0..epochs {
        let config = OptimizerConfig::sgd(lr, batch_size);
        let state = OptimizerState::zeros(trace.params.dim());
        trace.learning_rates.push(lr);
        match try_epoch(problem, &config, &trace.params, &state, loss, rng)? {
            Some((p, _, f)) => {
                trace.params = p;
                loss = f;
                trace.backed_off.push(false);
            }
            None => {
                lr /= 2.0;
                trace.backed_off.push(true);
            }
        }
        trace.losses.push(loss);
    }
    trace.final_lr = lr;
    Ok(trace)
}

/// Fine-tunes one member with plain SGD and back-off.
pub fn fine_tune_member<T: Scalar>(
    ind: &Individual<T>,
    cfg: &EsgdConfig,
    problem: &dyn FitnessProblem<T>,
    lr0: f64,
    rng: &mut StreamRng,
) -> Result<(Individual<T>, BackoffTrace<T>)> {
    let fitness = ind.evaluated_fitness()?;
    let trace = backoff_sgd(
        problem,
        ind.params.clone(),
        fitness,
        lr0,
        cfg.finetune_epochs,
        cfg.finetune_batch,
        rng,
    )?;
    let mut out = ind.clone();
    out.params = trace.params.clone();
    out.fitness = Some(trace.losses.last().copied().unwrap_or(fitness));
    Ok((out, trace))
}

/// Anchor (id 0, parameters untouched) plus `mu - 1` freshly initialised members.
pub fn init_population<T: Scalar>(
    anchor_params: &ParamVector<T>,
    cfg: &EsgdConfig,
    problem: &dyn FitnessProblem<T>,
    seed: u64,
) -> Result<Population<T>> {
    if anchor_params.dim() != problem.dimension() {
        return Err(Error::Dimension {
            expected: problem.dimension(),
            actual: anchor_params.dim(),
        });
    }
    let mu = cfg.evolution.mu as u64;
    let members = (0..mu)
        .into_par_iter()
        .map(|id| {
            let params = if id == 0 {
                anchor_params.clone()
            } else {
                let mut rng = substream(seed, Stream::Init, &[id]);
                ParamVector::new(problem.random_params(&mut rng))
            };
            let fitness = evaluate_fitness(problem, &params)?;
            let mut ind = Individual::new(id, params).with_fitness(fitness);
            ind.is_anchor = id == 0;
            Ok(ind)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Population {
        members,
        generation: 0,
        next_id: mu,
    })
}

/// Settings of the single-optimizer reference recipe.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn new(lr0: f64, seed: u64) -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            lr0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::config("baseline.epochs", "must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("baseline.batch_size", "must be at least 1"));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config("baseline.lr0", "must be positive"));
        }
        Ok(())
    }
}

/// Plain SGD without momentum from a random start; a worse epoch is undone
/// and halves the learning rate.
pub fn train_single_baseline<T: Scalar>(
    problem: &dyn FitnessProblem<T>,
    cfg: &BaselineConfig,
) -> Result<BackoffTrace<T>> {
    cfg.validate()?;
    let mut init_rng = substream(cfg.seed, Stream::Baseline, &[0]);
    let params = ParamVector::new(problem.random_params(&mut init_rng));
    let loss = evaluate_fitness(problem, &params)?;
    let mut rng = substream(cfg.seed, Stream::Baseline, &[1]);
    backoff_sgd(
        problem,
        params,
        loss,
        cfg.lr0,
        cfg.epochs,
        cfg.batch_size,
        &mut rng,
    )
}
