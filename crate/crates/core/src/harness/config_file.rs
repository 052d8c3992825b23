//! TOML run configuration and the shipped templates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::driver::{BaselineConfig, EsgdConfig};
use crate::error::{Error, Result};
use crate::evolution::EvolutionParams;
use crate::fitness::ProblemSpec;
use crate::optimizer::{AnnealSchedule, OptimizerPool, DEFAULT_BATCH_SIZES};

pub const BN50_TINY_TEMPLATE: &str = include_str!("../../configs/bn50-tiny.toml");
pub const ANALYTIC_TEMPLATE: &str = include_str!("../../configs/analytic.toml");

pub fn template(name: &str) -> Option<&'static str> {
    match name {
        "bn50-tiny" => Some(BN50_TINY_TEMPLATE),
        "analytic" => Some(ANALYTIC_TEMPLATE),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    pub problem: ProblemSpec,
    pub esgd: EsgdSection,
    pub evolution: EvolutionSection,
    pub optimizers: OptimizerSection,
    pub baseline: Option<BaselineSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsgdSection {
    pub generations: usize,
    #[serde(default = "one")]
    pub sgd_steps: usize,
    #[serde(default = "one")]
    pub evolution_steps: usize,
    pub finetune_epochs: usize,
    #[serde(default = "default_batch")]
    pub finetune_batch: usize,
    #[serde(default = "default_divisor")]
    pub finetune_lr_divisor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    pub mu: usize,
    pub lambda: usize,
    pub rho: usize,
    pub sigma: f64,
    #[serde(default = "unit")]
    pub sigma_decay: f64,
    pub p_anchor: f64,
    /// Elitist count; give this or `elitist_fraction`.
    pub elitist: Option<usize>,
    /// Elitist share of `mu`, rounded to the nearest count.
    pub elitist_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default = "default_batch_sizes")]
    pub batch_sizes: Vec<usize>,
    #[serde(default = "default_momentum_prob")]
    pub momentum_prob: f64,
    #[serde(default = "default_nesterov_prob")]
    pub nesterov_prob: f64,
    #[serde(default = "default_momentum_range")]
    pub momentum_range: (f64, f64),
    pub sgd: Option<AnnealSchedule>,
    pub adam: Option<AnnealSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub lr0: f64,
    /// Defaults to the top-level seed.
    pub seed: Option<u64>,
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn default_batch() -> usize {
    128
}
fn default_epochs() -> usize {
    20
}
fn default_divisor() -> f64 {
    10.0
}
fn default_batch_sizes() -> Vec<usize> {
    DEFAULT_BATCH_SIZES.to_vec()
}
fn default_momentum_prob() -> f64 {
    0.8
}
fn default_nesterov_prob() -> f64 {
    0.5
}
fn default_momentum_range() -> (f64, f64) {
    (0.1, 0.9)
}

impl RunConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    pub fn elitist_count(&self) -> Result<usize> {
        let ev = &self.evolution;
        match (ev.elitist, ev.elitist_fraction) {
            (Some(m), None) => Ok(m),
            (None, Some(f)) if (0.0..=1.0).contains(&f) => Ok((f * ev.mu as f64).round() as usize),
            (None, Some(_)) => Err(Error::config(
                "evolution.elitist_fraction",
                "must lie in [0, 1]",
            )),
            _ => Err(Error::config(
                "evolution.elitist",
                "give exactly one of `elitist` and `elitist_fraction`",
            )),
        }
    }

    pub fn esgd_config(&self) -> Result<EsgdConfig> {
        let cfg = EsgdConfig {
            generations: self.esgd.generations,
            sgd_steps: self.esgd.sgd_steps,
            evolution_steps: self.esgd.evolution_steps,
            finetune_epochs: self.esgd.finetune_epochs,
            finetune_batch: self.esgd.finetune_batch,
            finetune_lr_divisor: self.esgd.finetune_lr_divisor,
            evolution: EvolutionParams {
                mu: self.evolution.mu,
                lambda: self.evolution.lambda,
                rho: self.evolution.rho,
                sigma: self.evolution.sigma,
                sigma_decay: self.evolution.sigma_decay,
                p_anchor: self.evolution.p_anchor,
                m: self.elitist_count()?,
            },
            optimizers: OptimizerPool {
                sgd: self.optimizers.sgd,
                adam: self.optimizers.adam,
                batch_sizes: self.optimizers.batch_sizes.clone(),
                momentum_prob: self.optimizers.momentum_prob,
                nesterov_prob: self.optimizers.nesterov_prob,
                momentum_range: self.optimizers.momentum_range,
            },
            seed: self.seed,
            problem: self.problem.clone(),
            workers: self.workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn baseline_config(&self) -> Result<BaselineConfig> {
        let b = self
            .baseline
            .as_ref()
            .ok_or_else(|| Error::config("baseline", "section is missing"))?;
        let cfg = BaselineConfig {
            epochs: b.epochs,
            batch_size: b.batch_size,
            lr0: b.lr0,
            seed: b.seed.unwrap_or(self.seed),
        };
        cfg.validate()?;
        self.problem.validate()?;
        Ok(cfg)
    }
}
