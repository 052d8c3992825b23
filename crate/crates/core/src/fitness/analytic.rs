//! Closed-form benchmark landscapes. They carry no data, so minibatch
//! indices are accepted and ignored; `train_len` only sets how many
//! gradient steps make up one pass.

use std::f64::consts::PI;

use rand::{Rng, RngCore};

use super::FitnessProblem;
use crate::scalar::Scalar;

pub const DEFAULT_VIRTUAL_TRAIN_LEN: usize = 1024;

/// `f(x) = sum x_i^2`.
#[derive(Debug, Clone)]
pub struct Sphere {
    pub dim: usize,
    pub half_width: f64,
    pub virtual_train_len: usize,
}

impl Sphere {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            half_width: 5.0,
            virtual_train_len: DEFAULT_VIRTUAL_TRAIN_LEN,
        }
    }
}

impl<T: Scalar> FitnessProblem<T> for Sphere {
    fn name(&self) -> String {
        format!("sphere-{}", self.dim)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn train_len(&self) -> usize {
        self.virtual_train_len
    }

    fn validation_loss(&self, params: &[T]) -> T {
        params.iter().map(|&x| x * x).sum()
    }

    fn batch_loss(&self, params: &[T], _batch: &[usize]) -> T {
        FitnessProblem::<T>::validation_loss(self, params)
    }

    fn batch_gradient(&self, params: &[T], _batch: &[usize]) -> Vec<T> {
        params.iter().map(|&x| T::of(2.0) * x).collect()
    }

    fn random_params(&self, rng: &mut dyn RngCore) -> Vec<T> {
        uniform_box(self.dim, self.half_width, rng)
    }
}

/// `f(x) = 10 n + sum (x_i^2 - 10 cos(2 pi x_i))`, evaluated per term as
/// `x^2 + 10 (1 - cos(2 pi x))` so the result is never negative.
#[derive(Debug, Clone)]
pub struct Rastrigin {
    pub dim: usize,
    pub half_width: f64,
    pub virtual_train_len: usize,
}

impl Rastrigin {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            half_width: 5.12,
            virtual_train_len: DEFAULT_VIRTUAL_TRAIN_LEN,
        }
    }
}

impl<T: Scalar> FitnessProblem<T> for Rastrigin {
    fn name(&self) -> String {
        format!("rastrigin-{}", self.dim)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn train_len(&self) -> usize {
        self.virtual_train_len
    }

    fn validation_loss(&self, params: &[T]) -> T {
        let two_pi = T::of(2.0 * PI);
        let ten = T::of(10.0);
        params
            .iter()
            .map(|&x| x * x + ten * (T::one() - (two_pi * x).cos()))
            .sum()
    }

    fn batch_loss(&self, params: &[T], _batch: &[usize]) -> T {
        FitnessProblem::<T>::validation_loss(self, params)
    }

    fn batch_gradient(&self, params: &[T], _batch: &[usize]) -> Vec<T> {
        let two_pi = T::of(2.0 * PI);
        let twenty_pi = T::of(20.0 * PI);
        params
            .iter()
            .map(|&x| T::of(2.0) * x + twenty_pi * (two_pi * x).sin())
            .collect()
    }

    fn random_params(&self, rng: &mut dyn RngCore) -> Vec<T> {
        uniform_box(self.dim, self.half_width, rng)
    }
}

fn uniform_box<T: Scalar>(dim: usize, half_width: f64, rng: &mut dyn RngCore) -> Vec<T> {
    (0..dim)
        .map(|_| T::of(rng.random_range(-half_width..half_width)))
        .collect()
}
