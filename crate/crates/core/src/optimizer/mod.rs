//! Gradient-based update rules and their per-individual state.

mod sampler;

pub use sampler::{lr_bounds, sample_config, AnnealSchedule, OptimizerPool, DEFAULT_BATCH_SIZES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Sgd,
    Adam,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Sgd => "sgd",
            Family::Adam => "adam",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Family::Sgd => 0,
            Family::Adam => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Family::Sgd),
            1 => Some(Family::Adam),
            _ => None,
        }
    }
}

/// One sampled optimizer: family plus hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub family: Family,
    pub learning_rate: f64,
    pub momentum: Option<f64>,
    pub nesterov: bool,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64, batch_size: usize) -> Self {
        Self {
            family: Family::Sgd,
            learning_rate,
            momentum: None,
            nesterov: false,
            batch_size,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }

    pub fn momentum(learning_rate: f64, momentum: f64, nesterov: bool, batch_size: usize) -> Self {
        Self {
            momentum: Some(momentum),
            nesterov,
            ..Self::sgd(learning_rate, batch_size)
        }
    }

    pub fn adam(learning_rate: f64, batch_size: usize) -> Self {
        Self {
            family: Family::Adam,
            ..Self::sgd(learning_rate, batch_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                "learning_rate",
                "must be positive and finite",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.nesterov && self.momentum.is_none() {
            return Err(Error::config("nesterov", "requires momentum"));
        }
        if self.family == Family::Adam && (self.momentum.is_some() || self.nesterov) {
            return Err(Error::config("momentum", "not used by adam"));
        }
        Ok(())
    }

    /// Flat key-value view used by metrics and manifests.
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("family", self.family.name().to_string()),
            ("lr", format!("{:e}", self.learning_rate)),
            (
                "momentum",
                self.momentum
                    .map_or_else(|| "none".to_string(), |m| m.to_string()),
            ),
            ("nesterov", self.nesterov.to_string()),
            ("batch_size", self.batch_size.to_string()),
        ]
    }
}

/// Momentum and Adam buffers of one individual.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub velocity: Vec<T>,
    pub m1: Vec<T>,
    pub m2: Vec<T>,
    pub step_count: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            velocity: vec![T::zero(); dim],
            m1: vec![T::zero(); dim],
            m2: vec![T::zero(); dim],
            step_count: 0,
        }
    }

    pub fn reset(&mut self) {
        self.velocity.iter_mut().for_each(|v| *v = T::zero());
        self.m1.iter_mut().for_each(|v| *v = T::zero());
        self.m2.iter_mut().for_each(|v| *v = T::zero());
        self.step_count = 0;
    }

    pub fn dim(&self) -> usize {
        self.velocity.len()
    }
}

/// Applies one update in place. Parameters and state are untouched on error.
pub fn step_in_place<T: Scalar>(
    config: &OptimizerConfig,
    state: &mut OptimizerState<T>,
    params: &mut [T],
    grad: &[T],
) -> Result<()> {
    let d = params.len();
    if grad.len() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: grad.len(),
        });
    }
    if state.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: state.dim(),
        });
    }
    if config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(Error::config("learning_rate", "must be positive"));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }

    let lr = T::of(config.learning_rate);
    match (config.family, config.momentum) {
        (Family::Sgd, None) => {
            for (p, &g) in params.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        (Family::Sgd, Some(m)) => {
            let m = T::of(m);
            for ((p, v), &g) in params.iter_mut().zip(state.velocity.iter_mut()).zip(grad) {
                *v = m * *v + g;
                if config.nesterov {
                    *p -= lr * (m * *v + g);
                } else {
                    *p -= lr * *v;
                }
            }
        }
        (Family::Adam, _) => {
            let b1 = T::of(config.beta1);
            let b2 = T::of(config.beta2);
            let eps = T::of(config.epsilon);
            let t = (state.step_count + 1) as i32;
            let c1 = T::one() - b1.powi(t);
            let c2 = T::one() - b2.powi(t);
            for (((p, m1), m2), &g) in params
                .iter_mut()
                .zip(state.m1.iter_mut())
                .zip(state.m2.iter_mut())
                .zip(grad)
            {
                *m1 = b1 * *m1 + (T::one() - b1) * g;
                *m2 = b2 * *m2 + (T::one() - b2) * g * g;
                let m_hat = *m1 / c1;
                let v_hat = *m2 / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    state.step_count += 1;
    Ok(())
}

/// Pure form of [`step_in_place`]: returns the updated parameters and state.
pub fn step<T: Scalar>(
    config: &OptimizerConfig,
    state: &OptimizerState<T>,
    params: &ParamVector<T>,
    grad: &[T],
) -> Result<(ParamVector<T>, OptimizerState<T>)> {
    let mut p = params.clone();
    let mut s = state.clone();
    step_in_place(config, &mut s, p.as_mut_slice(), grad)?;
    Ok((p, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector<f64> {
        ParamVector::new(v.to_vec())
    }

    #[test]
    fn plain_sgd_single_step() {
        let cfg = OptimizerConfig::sgd(0.1, 64);
        let (p, s) = step(
            &cfg,
            &OptimizerState::zeros(2),
            &pv(&[1.0, 1.0]),
            &[2.0, -2.0],
        )
        .unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
        assert!((p[1] - 1.2).abs() < 1e-15);
        assert_eq!(s.step_count, 1);
    }

    /// Hand recurrence: v_t = m v_{t-1} + g, theta_t = theta_{t-1} - lr v_t.
    #[test]
    fn momentum_matches_hand_recurrence() {
        let cfg = OptimizerConfig::momentum(0.1, 0.5, false, 64);
        let mut state = OptimizerState::zeros(1);
        let mut p = pv(&[0.0]);
        // v: 1, 1.5, 1.75, 1.875, 1.9375 ; cumulative displacement 0.1 * sum(v)
        let expected_v = [1.0, 1.5, 1.75, 1.875, 1.9375];
        let expected_p = [-0.1, -0.25, -0.425, -0.6125, -0.80625];
        for t in 0..5 {
            let (np, ns) = step(&cfg, &state, &p, &[1.0]).unwrap();
            p = np;
            state = ns;
            assert!(
                (state.velocity[0] - expected_v[t]).abs() < 1e-12,
                "v at step {t}"
            );
            assert!((p[0] - expected_p[t]).abs() < 1e-12, "theta at step {t}");
        }
    }

    #[test]
    fn nesterov_uses_lookahead() {
        let cfg = OptimizerConfig::momentum(0.1, 0.5, true, 64);
        let (p, s) = step(&cfg, &OptimizerState::zeros(1), &pv(&[0.0]), &[1.0]).unwrap();
        // v = 1, theta = -0.1 * (0.5 * 1 + 1)
        assert_eq!(s.velocity[0], 1.0);
        assert!((p[0] + 0.15).abs() < 1e-15);
        let (p, s) = step(&cfg, &s, &p, &[1.0]).unwrap();
        // v = 1.5, theta -= 0.1 * (0.75 + 1)
        assert_eq!(s.velocity[0], 1.5);
        assert!((p[0] + 0.325).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_sign_times_lr() {
        let mut cfg = OptimizerConfig::adam(0.01, 64);
        cfg.epsilon = 0.0;
        let g = [3.0, -0.25, 1e-6];
        let (p, _) = step(&cfg, &OptimizerState::zeros(3), &pv(&[0.0, 0.0, 0.0]), &g).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            assert!((pi + 0.01 * gi.signum()).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_mutation() {
        let cfg = OptimizerConfig::momentum(0.1, 0.9, false, 64);
        let mut state = OptimizerState::zeros(2);
        let mut p = vec![1.0, 2.0];
        let err = step_in_place(&cfg, &mut state, &mut p, &[1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(state, OptimizerState::zeros(2));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let cfg = OptimizerConfig::sgd(0.1, 64);
        assert!(step(&cfg, &OptimizerState::zeros(2), &pv(&[1.0, 2.0]), &[1.0]).is_err());
    }

    #[test]
    fn config_invariants() {
        assert!(OptimizerConfig::sgd(0.1, 64).validate().is_ok());
        let mut bad = OptimizerConfig::sgd(0.1, 64);
        bad.nesterov = true;
        assert!(bad.validate().is_err());
        let mut bad = OptimizerConfig::adam(0.1, 64);
        bad.momentum = Some(0.5);
        assert!(bad.validate().is_err());
        assert!(OptimizerConfig::sgd(0.0, 64).validate().is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let cfg = OptimizerConfig::adam(0.01, 64);
        let p = ParamVector::new(vec![1.0f32, -1.0]);
        let (p2, _) = step(&cfg, &OptimizerState::zeros(2), &p, &[1.0f32, -1.0]).unwrap();
        assert!((p2[0] - 0.99).abs() < 1e-6);
    }

    fn any_config() -> impl Strategy<Value = OptimizerConfig> {
        prop_oneof![
            (1e-4..1.0f64).prop_map(|lr| OptimizerConfig::sgd(lr, 64)),
            (1e-4..1.0f64, 0.1..0.9f64, any::<bool>())
                .prop_map(|(lr, m, n)| OptimizerConfig::momentum(lr, m, n, 64)),
            (1e-4..1.0f64).prop_map(|lr| OptimizerConfig::adam(lr, 64)),
        ]
    }

    proptest! {
        #[test]
        fn zero_gradient_from_zero_state_is_a_no_op(cfg in any_config(), v in prop::collection::vec(-10.0..10.0f64, 1..8)) {
            let p = ParamVector::new(v);
            let (p2, _) = step(&cfg, &OptimizerState::zeros(p.dim()), &p, &vec![0.0; p.dim()]).unwrap();
            prop_assert_eq!(p2, p);
        }

        #[test]
        fn plain_sgd_descends_the_sphere(lr in 0.01..0.99f64, v in prop::collection::vec(-5.0..5.0f64, 1..8)) {
            use crate::fitness::{FitnessProblem, Sphere};
            let sphere = Sphere::new(v.len());
            let cfg = OptimizerConfig::sgd(lr, 64);
            let mut p = ParamVector::new(v);
            let mut state = OptimizerState::zeros(p.dim());
            let mut loss: f64 = sphere.validation_loss(&p);
            for _ in 0..20 {
                let g = sphere.batch_gradient(&p, &[]);
                step_in_place(&cfg, &mut state, p.as_mut_slice(), &g).unwrap();
                let next = sphere.validation_loss(&p);
                prop_assert!(next <= loss);
                loss = next;
            }
        }
    }
}
