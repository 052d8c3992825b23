//! The generation loop, the fine-tune phase and iterative anchoring.

use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;

use super::phases::{fine_tune_member, init_population, sgd_phase};
use super::EsgdConfig;
use crate::error::{Error, Result};
use crate::evolution::{generate_offspring, select_next_population};
use crate::fitness::{evaluate_fitness, FitnessProblem};
use crate::history::{FineTuneRecord, GenerationRecord, RoundRecord, RunHistory, SwitchEvent};
use crate::optimizer::lr_bounds;
use crate::params::ParamVector;
use crate::population::{Individual, Population};
use crate::rng::{derive_seed, substream, Stream};
use crate::scalar::Scalar;

pub fn build_pool(workers: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))
}

/// Seed of anchoring round `round`; round 0 uses the master seed itself.
pub fn round_seed(master: u64, round: usize) -> u64 {
    if round == 0 {
        master
    } else {
        derive_seed(master, Stream::Round, &[round as u64])
    }
}

/// One generation: SGD phase for every non-anchor member, then `K_v`
/// evolution steps. Must be called inside the worker pool.
pub fn run_generation<T: Scalar>(
    pop: &Population<T>,
    cfg: &EsgdConfig,
    problem: &dyn FitnessProblem<T>,
    seed: u64,
) -> Result<(Population<T>, GenerationRecord)> {
    let g = pop.generation;
    let ep = &cfg.evolution;
    let mut non_finite = 0;

    let members = pop
        .members
        .par_iter()
        .map(|m| {
            if m.is_anchor {
                Ok(m.clone())
            } else {
                let mut rng = substream(seed, Stream::Sgd, &[g as u64, m.id]);
                sgd_phase(m, cfg, problem, g, &mut rng)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    non_finite += members
        .iter()
        .filter(|m| !m.fitness_key().is_finite())
        .count();
    let mut next = Population {
        members,
        generation: g,
        next_id: pop.next_id,
    };

    let sigma = ep.sigma_at(g);
    let mut anchor_after_step = Vec::with_capacity(cfg.evolution_steps);
    let mut switches = Vec::new();
    for v in 0..cfg.evolution_steps {
        let mut offspring = generate_offspring(&next, ep, sigma, |id| {
            substream(seed, Stream::Offspring, &[g as u64, v as u64, id])
        })?;
        offspring
            .par_iter_mut()
            .try_for_each(|child| -> Result<()> {
                child.fitness = Some(evaluate_fitness(problem, &child.params)?);
                Ok(())
            })?;
        non_finite += offspring
            .iter()
            .filter(|c| !c.fitness_key().is_finite())
            .count();
        next.next_id += ep.lambda as u64;

        let (anchor, others): (Vec<_>, Vec<_>) = std::mem::take(&mut next.members)
            .into_iter()
            .partition(|m| m.is_anchor);
        let anchor = anchor
            .into_iter()
            .next()
            .ok_or(Error::Shape("population lost its anchor".into()))?;
        let mut rng = substream(seed, Stream::Select, &[g as u64, v as u64]);
        let sel = select_next_population(others, offspring, anchor, ep, &mut rng)?;
        let anchor_fitness = sel.members[0].evaluated_fitness()?;
        if sel.switched {
            switches.push(SwitchEvent {
                generation: 0,
                evolution_step: v,
                old_fitness: sel.previous_anchor_fitness.as_f64(),
                new_fitness: anchor_fitness.as_f64(),
                new_anchor_id: sel.members[0].id,
            });
        }
        anchor_after_step.push(anchor_fitness.as_f64());
        next.members = sel.members;
    }
    next.generation = g + 1;

    next.validate(ep.mu)?;
    if let Some(bad) = next.members.iter().find(|m| !m.params.is_finite()) {
        return Err(Error::Aborted {
            generation: g + 1,
            message: format!("individual {} has non-finite parameters", bad.id),
        });
    }

    let (lr_low, lr_high) = cfg
        .optimizers
        .primary_schedule()
        .map_or((f64::NAN, f64::NAN), |s| lr_bounds(&s, g));
    let record = GenerationRecord {
        round: 0,
        generation: g + 1,
        best: next.best_fitness()?.as_f64(),
        median: next.median_fitness()?.as_f64(),
        anchor: next.anchor().evaluated_fitness()?.as_f64(),
        switched: !switches.is_empty(),
        lr_low,
        lr_high,
        anchor_after_step,
        switches,
        non_finite,
    };
    Ok((next, record))
}

/// Fine-tunes every member; returns the new population and per-epoch records.
pub fn fine_tune<T: Scalar>(
    pop: &Population<T>,
    cfg: &EsgdConfig,
    problem: &dyn FitnessProblem<T>,
    seed: u64,
) -> Result<(Population<T>, Vec<FineTuneRecord>)> {
    if cfg.finetune_epochs == 0 {
        return Ok((pop.clone(), Vec::new()));
    }
    let lr0 = cfg.finetune_lr();
    let results = pop
        .members
        .par_iter()
        .map(|m| {
            let mut rng = substream(seed, Stream::FineTune, &[m.id]);
            fine_tune_member(m, cfg, problem, lr0, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let anchor_pos = pop
        .anchor_index()
        .ok_or(Error::Shape("population has no anchor".into()))?;
    let records = (0..cfg.finetune_epochs)
        .map(|e| FineTuneRecord {
            round: 0,
            epoch: e + 1,
            best: results
                .iter()
                .map(|(_, t)| t.losses[e].fitness_key().as_f64())
                .fold(f64::INFINITY, f64::min),
            anchor: results[anchor_pos].1.losses[e].as_f64(),
            backoffs: results.iter().filter(|(_, t)| t.backed_off[e]).count(),
        })
        .collect();
    let members = results.into_iter().map(|(m, _)| m).collect();
    Ok((
        Population {
            members,
            generation: pop.generation,
            next_id: pop.next_id,
        },
        records,
    ))
}

/// A resumable evolutionary run (one anchoring round).
pub struct EsgdRun<T: Scalar> {
    cfg: EsgdConfig,
    problem: Arc<dyn FitnessProblem<T>>,
    workers: ThreadPool,
    seed: u64,
    round: usize,
    round_initial_anchor: f64,
    pub population: Population<T>,
    /// History of all rounds so far, this one included.
    pub history: RunHistory,
}

impl<T: Scalar> EsgdRun<T> {
    pub fn new(
        cfg: EsgdConfig,
        problem: Arc<dyn FitnessProblem<T>>,
        anchor: &ParamVector<T>,
    ) -> Result<Self> {
        Self::new_round(cfg, problem, anchor, 0, None)
    }

    /// Starts round `round` from `anchor`, appending to `prior` when given.
    pub fn new_round(
        cfg: EsgdConfig,
        problem: Arc<dyn FitnessProblem<T>>,
        anchor: &ParamVector<T>,
        round: usize,
        prior: Option<RunHistory>,
    ) -> Result<Self> {
        cfg.validate()?;
        let workers = build_pool(cfg.workers)?;
        let seed = round_seed(cfg.seed, round);
        let population =
            workers.install(|| init_population(anchor, &cfg, problem.as_ref(), seed))?;
        let anchor_fitness = population.anchor().evaluated_fitness()?.as_f64();
        let history = prior.unwrap_or_else(|| RunHistory::new(anchor_fitness));
        Ok(Self {
            cfg,
            problem,
            workers,
            seed,
            round,
            round_initial_anchor: anchor_fitness,
            population,
            history,
        })
    }

    /// Rebuilds a run from checkpointed state.
    pub fn restore(
        cfg: EsgdConfig,
        problem: Arc<dyn FitnessProblem<T>>,
        round: usize,
        round_initial_anchor: f64,
        population: Population<T>,
        history: RunHistory,
    ) -> Result<Self> {
        cfg.validate()?;
        population.validate(cfg.evolution.mu)?;
        if population.members[0].params.dim() != problem.dimension() {
            return Err(Error::Dimension {
                expected: problem.dimension(),
                actual: population.members[0].params.dim(),
            });
        }
        let workers = build_pool(cfg.workers)?;
        let seed = round_seed(cfg.seed, round);
        Ok(Self {
            cfg,
            problem,
            workers,
            seed,
            round,
            round_initial_anchor,
            population,
            history,
        })
    }

    pub fn config(&self) -> &EsgdConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &Arc<dyn FitnessProblem<T>> {
        &self.problem
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn round_initial_anchor(&self) -> f64 {
        self.round_initial_anchor
    }

    pub fn is_evolution_done(&self) -> bool {
        self.population.generation >= self.cfg.generations
    }

    /// Runs the next generation. On error the run state is left untouched.
    pub fn step_generation(&mut self) -> Result<&GenerationRecord> {
        let (pop, mut record) = self.workers.install(|| {
            run_generation(
                &self.population,
                &self.cfg,
                self.problem.as_ref(),
                self.seed,
            )
        })?;
        let global = self.round * self.cfg.generations + pop.generation;
        record.round = self.round;
        record.generation = global;
        for s in &mut record.switches {
            s.generation = global;
        }
        self.population = pop;
        self.history.generations.push(record);
        Ok(self.history.generations.last().expect("just pushed"))
    }

    /// Fine-tunes the final population and returns its best member.
    pub fn finish(mut self) -> Result<(Individual<T>, RunHistory)> {
        while !self.is_evolution_done() {
            self.step_generation()?;
        }
        let (pop, mut records) = self.workers.install(|| {
            fine_tune(
                &self.population,
                &self.cfg,
                self.problem.as_ref(),
                self.seed,
            )
        })?;
        for r in &mut records {
            r.round = self.round;
        }
        let best = pop.best()?.clone();
        self.history.fine_tune.extend(records);
        self.history.rounds.push(RoundRecord {
            round: self.round,
            initial_anchor: self.round_initial_anchor,
            final_best: best.evaluated_fitness()?.as_f64(),
        });
        Ok((best, self.history))
    }
}

/// Full run: initialise around the anchor, evolve, fine-tune, pick the best.
pub fn run_esgd<T: Scalar>(
    cfg: &EsgdConfig,
    problem: Arc<dyn FitnessProblem<T>>,
    anchor: &ParamVector<T>,
) -> Result<(Individual<T>, RunHistory)> {
    EsgdRun::new(cfg.clone(), problem, anchor)?.finish()
}

/// `rounds` consecutive runs, each seeded with the previous round's best model.
pub fn iterate_anchors<T: Scalar>(
    cfg: &EsgdConfig,
    problem: Arc<dyn FitnessProblem<T>>,
    anchor: &ParamVector<T>,
    rounds: usize,
) -> Result<(Individual<T>, RunHistory)> {
    if rounds < 1 {
        return Err(Error::config("rounds", "must be at least 1"));
    }
    let mut anchor = anchor.clone();
    let mut history = None;
    let mut best = None;
    for r in 0..rounds {
        let run = EsgdRun::new_round(cfg.clone(), problem.clone(), &anchor, r, history.take())?;
        let (b, h) = run.finish()?;
        anchor = b.params.clone();
        best = Some(b);
        history = Some(h);
    }
    Ok((best.expect("rounds >= 1"), history.expect("rounds >= 1")))
}
