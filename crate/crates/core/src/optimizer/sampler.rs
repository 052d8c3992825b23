//! Stochastic hyper-parameter sampling with generation-annealed learning rates.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Family, OptimizerConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
use crate::error::{Error, Result};

pub const DEFAULT_BATCH_SIZES: [usize; 4] = [64, 128, 256, 512];

/// Learning-rate range `[a_0, b_0]` shrinking geometrically by `gamma` per generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub a0: f64,
    pub b0: f64,
    pub gamma: f64,
}

impl AnnealSchedule {
    pub fn new(a0: f64, b0: f64, gamma: f64) -> Self {
        Self { a0, b0, gamma }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.a0 > 0.0 && self.b0 > 0.0) {
            return Err(Error::config(field, "a0 and b0 must be positive"));
        }
        if self.a0 > self.b0 {
            return Err(Error::config(
                field,
                format!("a0 ({}) exceeds b0 ({})", self.a0, self.b0),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(
                field,
                format!("gamma ({}) must lie in (0, 1]", self.gamma),
            ));
        }
        Ok(())
    }
}

/// `(gamma^k a_0, gamma^k b_0)`.
pub fn lr_bounds(schedule: &AnnealSchedule, k: usize) -> (f64, f64) {
    let scale = schedule.gamma.powi(k as i32);
    (scale * schedule.a0, scale * schedule.b0)
}

/// The set of optimizers an individual may be assigned, plus sampling probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerPool {
    pub sgd: Option<AnnealSchedule>,
    pub adam: Option<AnnealSchedule>,
    pub batch_sizes: Vec<usize>,
    pub momentum_prob: f64,
    pub nesterov_prob: f64,
    pub momentum_range: (f64, f64),
}

impl OptimizerPool {
    pub fn new(sgd: Option<AnnealSchedule>, adam: Option<AnnealSchedule>) -> Self {
        Self {
            sgd,
            adam,
            batch_sizes: DEFAULT_BATCH_SIZES.to_vec(),
            momentum_prob: 0.8,
            nesterov_prob: 0.5,
            momentum_range: (0.1, 0.9),
        }
    }

    pub fn families(&self) -> Vec<(Family, AnnealSchedule)> {
        let mut out = Vec::with_capacity(2);
        if let Some(s) = self.sgd {
            out.push((Family::Sgd, s));
        }
        if let Some(s) = self.adam {
            out.push((Family::Adam, s));
        }
        out
    }

    /// Schedule reported in metrics and used for the fine-tune learning rate.
    pub fn primary_schedule(&self) -> Option<AnnealSchedule> {
        self.sgd.or(self.adam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sgd.is_none() && self.adam.is_none() {
            return Err(Error::config("optimizers", "optimizer pool is empty"));
        }
        if let Some(s) = &self.sgd {
            s.validate("optimizers.sgd")?;
        }
        if let Some(s) = &self.adam {
            s.validate("optimizers.adam")?;
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return Err(Error::config(
                "optimizers.batch_sizes",
                "must be a non-empty list of positive sizes",
            ));
        }
        for (name, p) in [
            ("momentum_prob", self.momentum_prob),
            ("nesterov_prob", self.nesterov_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(
                    format!("optimizers.{name}"),
                    "must lie in [0, 1]",
                ));
            }
        }
        let (lo, hi) = self.momentum_range;
        if !(0.0 <= lo && lo <= hi && hi < 1.0) {
            return Err(Error::config(
                "optimizers.momentum_range",
                "must satisfy 0 <= lo <= hi < 1",
            ));
        }
        Ok(())
    }
}

/// Draws an optimizer and its hyper-parameters for generation `k`.
pub fn sample_config<R: Rng + ?Sized>(
    k: usize,
    pool: &OptimizerPool,
    rng: &mut R,
) -> Result<OptimizerConfig> {
    let families = pool.families();
    let &(family, schedule) = families
        .choose(rng)
        .ok_or_else(|| Error::config("optimizers", "optimizer pool is empty"))?;
    let batch_size = *pool
        .batch_sizes
        .choose(rng)
        .ok_or_else(|| Error::config("optimizers.batch_sizes", "empty"))?;

    let (momentum, nesterov) = match family {
        Family::Sgd if rng.random_bool(pool.momentum_prob) => {
            let (lo, hi) = pool.momentum_range;
            let m = rng.random_range(lo..=hi);
            (Some(m), rng.random_bool(pool.nesterov_prob))
        }
        _ => (None, false),
    };

    let (a, b) = lr_bounds(&schedule, k);
    let learning_rate = rng.random_range(a..=b).clamp(a, b);

    Ok(OptimizerConfig {
        family,
        learning_rate,
        momentum,
        nesterov,
        batch_size,
        beta1: ADAM_BETA1,
        beta2: ADAM_BETA2,
        epsilon: ADAM_EPSILON,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use proptest::prelude::*;

    fn bn50_sgd() -> AnnealSchedule {
        AnnealSchedule::new(1e-4, 2e-3, 0.9)
    }

    #[test]
    fn bounds_at_generation_zero_and_one() {
        assert_eq!(lr_bounds(&bn50_sgd(), 0), (1e-4, 2e-3));
        let (a, b) = lr_bounds(&bn50_sgd(), 1);
        assert!((a - 9e-5).abs() <= 1e-19);
        assert!((b - 1.8e-3).abs() <= 1e-18);
    }

    #[test]
    fn unit_gamma_keeps_bounds_constant() {
        let s = AnnealSchedule::new(0.01, 0.03, 1.0);
        for k in 0..50 {
            assert_eq!(lr_bounds(&s, k), (0.01, 0.03));
        }
    }

    #[test]
    fn bounds_decrease_and_keep_ratio() {
        let s = bn50_sgd();
        let r0 = s.a0 / s.b0;
        for k in 1..40 {
            let (a0, b0) = lr_bounds(&s, k - 1);
            let (a1, b1) = lr_bounds(&s, k);
            assert!(a1 < a0 && b1 < b0);
            assert!((a1 / b1 - r0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_pool_is_an_error() {
        let pool = OptimizerPool::new(None, None);
        assert!(pool.validate().is_err());
        let mut rng = substream(1, Stream::Sgd, &[]);
        assert!(sample_config(0, &pool, &mut rng).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(AnnealSchedule::new(2e-3, 1e-4, 0.9).validate("x").is_err());
        assert!(AnnealSchedule::new(1e-4, 2e-3, 1.1).validate("x").is_err());
        assert!(AnnealSchedule::new(0.0, 2e-3, 0.9).validate("x").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn samples_satisfy_config_invariants(seed in any::<u64>(), k in 0usize..30) {
            let pool = OptimizerPool::new(Some(bn50_sgd()), Some(AnnealSchedule::new(1e-4, 1e-3, 0.9)));
            let mut rng = substream(seed, Stream::Sgd, &[]);
            for _ in 0..2000 {
                let c = sample_config(k, &pool, &mut rng).unwrap();
                prop_assert!(c.validate().is_ok());
                let sched = match c.family { Family::Sgd => pool.sgd.unwrap(), Family::Adam => pool.adam.unwrap() };
                let (a, b) = lr_bounds(&sched, k);
                prop_assert!(a <= c.learning_rate && c.learning_rate <= b);
                prop_assert!(DEFAULT_BATCH_SIZES.contains(&c.batch_size));
                if let Some(m) = c.momentum {
                    prop_assert!((0.1..=0.9).contains(&m));
                }
            }
        }
    }
}
