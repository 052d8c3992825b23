use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::EvolutionParams;
use crate::fitness::ProblemSpec;
use crate::optimizer::{lr_bounds, OptimizerPool};

/// Everything a full evolutionary run needs, already resolved to counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsgdConfig {
    /// Generations per round (K).
    pub generations: usize,
    /// SGD passes per member per generation (K_s).
    pub sgd_steps: usize,
    /// Evolution steps per generation (K_v).
    pub evolution_steps: usize,
    /// Fine-tune epochs after the last generation (K_f).
    pub finetune_epochs: usize,
    pub finetune_batch: usize,
    /// Fine-tune starts at `a_K / finetune_lr_divisor`.
    pub finetune_lr_divisor: f64,
    pub evolution: EvolutionParams,
    pub optimizers: OptimizerPool,
    pub seed: u64,
    pub problem: ProblemSpec,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl EsgdConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("esgd.generations", self.generations),
            ("esgd.sgd_steps", self.sgd_steps),
            ("esgd.evolution_steps", self.evolution_steps),
            ("esgd.finetune_batch", self.finetune_batch),
        ] {
            if v < 1 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if !(self.finetune_lr_divisor > 0.0 && self.finetune_lr_divisor.is_finite()) {
            return Err(Error::config(
                "esgd.finetune_lr_divisor",
                "must be positive",
            ));
        }
        self.evolution.validate()?;
        self.optimizers.validate()?;
        self.problem.validate()
    }

    /// Initial plain-SGD rate of the fine-tune phase.
    pub fn finetune_lr(&self) -> f64 {
        let schedule = self
            .optimizers
            .primary_schedule()
            .expect("validated pool has a schedule");
        lr_bounds(&schedule, self.generations).0 / self.finetune_lr_divisor
    }
}
