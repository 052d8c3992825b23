//! Fitness problems: validation-set loss for ranking, train-minibatch
//! gradients for the SGD phase.

mod analytic;
mod dataset;
mod mlp;

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use analytic::{Rastrigin, Sphere, DEFAULT_VIRTUAL_TRAIN_LEN};
pub use dataset::{make_synthetic_dataset, Dataset, CLASS_MEAN_SCALE};
pub use mlp::Mlp;

use crate::error::{Error, Result};
use crate::params::LayerShape;
use crate::scalar::Scalar;

/// A differentiable objective shared read-only by all workers.
pub trait FitnessProblem<T: Scalar>: Send + Sync {
    fn name(&self) -> String;

    fn dimension(&self) -> usize;

    /// Number of training examples one pass iterates over.
    fn train_len(&self) -> usize;

    fn layer_shapes(&self) -> Option<&[LayerShape]> {
        None
    }

    /// Mean loss over the validation set. May be non-finite.
    fn validation_loss(&self, params: &[T]) -> T;

    /// Mean loss over the given training examples.
    fn batch_loss(&self, params: &[T], batch: &[usize]) -> T;

    /// Gradient of [`FitnessProblem::batch_loss`].
    fn batch_gradient(&self, params: &[T], batch: &[usize]) -> Vec<T>;

    /// Fresh random weights (not a perturbation of any existing model).
    fn random_params(&self, rng: &mut dyn RngCore) -> Vec<T>;
}

/// Validation loss of `params`; non-finite losses come back as `+inf`.
pub fn evaluate_fitness<T: Scalar>(problem: &dyn FitnessProblem<T>, params: &[T]) -> Result<T> {
    if params.len() != problem.dimension() {
        return Err(Error::Dimension {
            expected: problem.dimension(),
            actual: params.len(),
        });
    }
    let loss = problem.validation_loss(params);
    if loss.is_finite() {
        Ok(loss)
    } else {
        log::warn!(
            "{}: non-finite fitness {loss}, ranked as +inf",
            problem.name()
        );
        Ok(T::infinity())
    }
}

pub fn gradient<T: Scalar>(
    problem: &dyn FitnessProblem<T>,
    params: &[T],
    batch: &[usize],
) -> Result<Vec<T>> {
    if params.len() != problem.dimension() {
        return Err(Error::Dimension {
            expected: problem.dimension(),
            actual: params.len(),
        });
    }
    if batch.is_empty() {
        return Err(Error::Empty("gradient batch"));
    }
    let len = problem.train_len();
    if let Some(&index) = batch.iter().find(|&&i| i >= len) {
        return Err(Error::BatchIndex { index, len });
    }
    Ok(problem.batch_gradient(params, batch))
}

/// Hidden widths of the width-reduced feed-forward acoustic-model mirror.
pub const BN50_TINY_HIDDEN: [usize; 6] = [16, 16, 16, 16, 16, 8];
pub const BN50_TINY_INPUT: usize = 36;
pub const BN50_TINY_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub seed: u64,
    pub n_train: usize,
    pub n_valid: usize,
    pub d_x: usize,
    pub classes: usize,
}

/// Problem selector as written in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemSpec {
    Sphere {
        dim: usize,
        #[serde(default = "default_train_len")]
        train_len: usize,
    },
    Rastrigin {
        dim: usize,
        #[serde(default = "default_train_len")]
        train_len: usize,
    },
    Mlp {
        hidden: Vec<usize>,
        #[serde(default = "default_relu_layers")]
        relu_layers: usize,
        dataset: DatasetSpec,
    },
}

fn default_train_len() -> usize {
    DEFAULT_VIRTUAL_TRAIN_LEN
}

fn default_relu_layers() -> usize {
    3
}

impl ProblemSpec {
    pub fn bn50_tiny(dataset_seed: u64, n_train: usize, n_valid: usize) -> Self {
        ProblemSpec::Mlp {
            hidden: BN50_TINY_HIDDEN.to_vec(),
            relu_layers: 3,
            dataset: DatasetSpec {
                seed: dataset_seed,
                n_train,
                n_valid,
                d_x: BN50_TINY_INPUT,
                classes: BN50_TINY_CLASSES,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProblemSpec::Sphere { dim, train_len } | ProblemSpec::Rastrigin { dim, train_len } => {
                if *dim == 0 {
                    return Err(Error::config("problem.dim", "must be positive"));
                }
                if *train_len == 0 {
                    return Err(Error::config("problem.train_len", "must be positive"));
                }
            }
            ProblemSpec::Mlp {
                hidden, dataset, ..
            } => {
                if hidden.contains(&0) {
                    return Err(Error::config(
                        "problem.hidden",
                        "layer widths must be positive",
                    ));
                }
                for (name, v) in [
                    ("n_train", dataset.n_train),
                    ("n_valid", dataset.n_valid),
                    ("d_x", dataset.d_x),
                    ("classes", dataset.classes),
                ] {
                    if v == 0 {
                        return Err(Error::config(
                            format!("problem.dataset.{name}"),
                            "must be positive",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn build<T: Scalar>(&self) -> Result<Arc<dyn FitnessProblem<T>>> {
        self.validate()?;
        Ok(match self {
            ProblemSpec::Sphere { dim, train_len } => {
                let mut p = Sphere::new(*dim);
                p.virtual_train_len = *train_len;
                Arc::new(p)
            }
            ProblemSpec::Rastrigin { dim, train_len } => {
                let mut p = Rastrigin::new(*dim);
                p.virtual_train_len = *train_len;
                Arc::new(p)
            }
            ProblemSpec::Mlp {
                hidden,
                relu_layers,
                dataset,
            } => {
                let ds = make_synthetic_dataset::<T>(
                    dataset.seed,
                    dataset.n_train,
                    dataset.n_valid,
                    dataset.d_x,
                    dataset.classes,
                )?;
                Arc::new(Mlp::new(Arc::new(ds), hidden, *relu_layers)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use rand::Rng;
    use std::f64::consts::PI;

    fn tiny_mlp(seed: u64) -> Mlp<f64> {
        let ds = make_synthetic_dataset(seed, 40, 30, 36, 10).unwrap();
        Mlp::new(Arc::new(ds), &BN50_TINY_HIDDEN, 3).unwrap()
    }

    #[test]
    fn sphere_minimum_and_gradient() {
        let p = Sphere::new(2);
        assert_eq!(evaluate_fitness::<f64>(&p, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(
            gradient::<f64>(&p, &[1.0, -2.0], &[0]).unwrap(),
            vec![2.0, -4.0]
        );
    }

    #[test]
    fn rastrigin_minimum_is_zero() {
        let p = Rastrigin::new(10);
        assert_eq!(evaluate_fitness::<f64>(&p, &[0.0; 10]).unwrap(), 0.0);
    }

    /// d/dx [x^2 + 10(1 - cos 2 pi x)] = 2x + 20 pi sin(2 pi x); at x = 0.5 that is 1 + 20 pi sin(pi).
    #[test]
    fn rastrigin_gradient_matches_analytic_derivative() {
        let p = Rastrigin::new(2);
        let g = gradient::<f64>(&p, &[0.5, 0.0], &[0]).unwrap();
        let expected = 1.0 + 20.0 * PI * PI.sin();
        assert!((g[0] - expected).abs() < 1e-12, "{} vs {}", g[0], expected);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn analytic_problems_are_non_negative() {
        let mut rng = substream(11, Stream::Init, &[]);
        let r = Rastrigin::new(10);
        let s = Sphere::new(10);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..10).map(|_| rng.random_range(-20.0..20.0)).collect();
            assert!(FitnessProblem::<f64>::validation_loss(&r, &x) >= 0.0);
            assert!(FitnessProblem::<f64>::validation_loss(&s, &x) >= 0.0);
        }
    }

    /// Layers: 36->16, 16->16 (x4), 16->8, 8->10, each with bias.
    #[test]
    fn bn50_tiny_parameter_count() {
        let expected = (36 * 16 + 16) + 4 * (16 * 16 + 16) + (16 * 8 + 8) + (8 * 10 + 10);
        assert_eq!(expected, 1906);
        let m = tiny_mlp(1);
        assert_eq!(FitnessProblem::<f64>::dimension(&m), 1906);
        let shapes = FitnessProblem::<f64>::layer_shapes(&m).unwrap();
        assert_eq!(crate::params::parameter_count(shapes), 1906);
        assert_eq!(shapes.len(), 14);
    }

    #[test]
    fn zero_weights_give_uniform_prediction() {
        let m = tiny_mlp(2);
        let f = evaluate_fitness::<f64>(&m, &vec![0.0; 1906]).unwrap();
        assert!((f - 10f64.ln()).abs() < 1e-12, "{f}");
    }

    #[test]
    fn evaluation_is_pure() {
        let m = tiny_mlp(3);
        let mut rng = substream(3, Stream::Init, &[]);
        let p: Vec<f64> = FitnessProblem::<f64>::random_params(&m, &mut rng);
        let a = evaluate_fitness::<f64>(&m, &p).unwrap();
        let b = evaluate_fitness::<f64>(&m, &p).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn argument_errors() {
        let m = tiny_mlp(4);
        assert!(matches!(
            evaluate_fitness::<f64>(&m, &[0.0; 3]),
            Err(Error::Dimension {
                expected: 1906,
                actual: 3
            })
        ));
        let p = vec![0.0; 1906];
        assert!(matches!(gradient::<f64>(&m, &p, &[]), Err(Error::Empty(_))));
        assert!(matches!(
            gradient::<f64>(&m, &p, &[40]),
            Err(Error::BatchIndex { index: 40, len: 40 })
        ));
    }

    #[test]
    fn non_finite_loss_becomes_infinity() {
        let m = tiny_mlp(5);
        let mut p = vec![0.0; 1906];
        p[1905] = f64::NAN; // output bias, past every ReLU
        assert_eq!(evaluate_fitness::<f64>(&m, &p).unwrap(), f64::INFINITY);
    }

    #[test]
    fn spec_builds_each_problem() {
        let p = ProblemSpec::bn50_tiny(1, 20, 10).build::<f64>().unwrap();
        assert_eq!(p.dimension(), 1906);
        let r = ProblemSpec::Rastrigin {
            dim: 10,
            train_len: 8,
        }
        .build::<f32>()
        .unwrap();
        assert_eq!(r.train_len(), 8);
        assert!(ProblemSpec::Sphere {
            dim: 0,
            train_len: 1
        }
        .build::<f64>()
        .is_err());
    }

    #[test]
    fn spec_parses_from_toml() {
        let spec: ProblemSpec = toml::from_str("kind = \"rastrigin\"\ndim = 10\n").unwrap();
        assert_eq!(
            spec,
            ProblemSpec::Rastrigin {
                dim: 10,
                train_len: DEFAULT_VIRTUAL_TRAIN_LEN
            }
        );
    }
}
