//! Fully-connected softmax classifier with a ReLU bottom and sigmoid top,
//! trained with mean cross-entropy.
//!
//! Parameter layout, per dense layer: the `out x in` weight matrix
//! (row-major) followed by the `out x 1` bias column.

use std::sync::Arc;

use rand::{Rng, RngCore};

use super::dataset::Dataset;
use super::FitnessProblem;
use crate::error::{Error, Result};
use crate::params::LayerShape;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone)]
struct Dense {
    inputs: usize,
    outputs: usize,
    offset: usize,
    activation: Option<Activation>,
}

impl Dense {
    fn weights<'a, T>(&self, params: &'a [T]) -> &'a [T] {
        &params[self.offset..self.offset + self.inputs * self.outputs]
    }

    fn bias<'a, T>(&self, params: &'a [T]) -> &'a [T] {
        let start = self.offset + self.inputs * self.outputs;
        &params[start..start + self.outputs]
    }
}

#[derive(Debug, Clone)]
pub struct Mlp<T> {
    dataset: Arc<Dataset<T>>,
    layers: Vec<Dense>,
    shapes: Vec<LayerShape>,
    dim: usize,
}

impl<T: Scalar> Mlp<T> {
    /// `hidden` lists hidden-layer widths bottom-up; the first `relu_layers`
    /// of them use ReLU, the rest sigmoid.
    pub fn new(dataset: Arc<Dataset<T>>, hidden: &[usize], relu_layers: usize) -> Result<Self> {
        if hidden.contains(&0) {
            return Err(Error::config(
                "problem.hidden",
                "layer widths must be positive",
            ));
        }
        let mut widths = vec![dataset.d_x];
        widths.extend_from_slice(hidden);
        widths.push(dataset.classes);

        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut shapes = Vec::with_capacity(2 * layers.capacity());
        let mut offset = 0;
        for (i, pair) in widths.windows(2).enumerate() {
            let (inputs, outputs) = (pair[0], pair[1]);
            let activation = if i == hidden.len() {
                None
            } else if i < relu_layers {
                Some(Activation::Relu)
            } else {
                Some(Activation::Sigmoid)
            };
            layers.push(Dense {
                inputs,
                outputs,
                offset,
                activation,
            });
            shapes.push(LayerShape::new(outputs, inputs));
            shapes.push(LayerShape::new(outputs, 1));
            offset += outputs * (inputs + 1);
        }
        Ok(Self {
            dataset,
            layers,
            shapes,
            dim: offset,
        })
    }

    pub fn dataset(&self) -> &Dataset<T> {
        &self.dataset
    }

    /// Forward pass; returns every layer's post-activation output (logits last).
    fn forward(&self, params: &[T], x: &[T]) -> Vec<Vec<T>> {
        let mut outs: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = outs.last().map_or(x, Vec::as_slice);
            let w = layer.weights(params);
            let b = layer.bias(params);
            let out = (0..layer.outputs)
                .map(|r| {
                    let row = &w[r * layer.inputs..(r + 1) * layer.inputs];
                    let z = row
                        .iter()
                        .zip(input)
                        .fold(b[r], |acc, (&wi, &xi)| acc + wi * xi);
                    match layer.activation {
                        Some(Activation::Relu) => z.max(T::zero()),
                        Some(Activation::Sigmoid) => T::one() / (T::one() + (-z).exp()),
                        None => z,
                    }
                })
                .collect();
            outs.push(out);
        }
        outs
    }

    fn example_loss(&self, params: &[T], x: &[T], y: usize) -> T {
        let outs = self.forward(params, x);
        let logits = outs.last().expect("at least one layer");
        log_sum_exp(logits) - logits[y]
    }

    /// Adds the gradient of one example's loss into `grad`.
    fn accumulate_gradient(&self, params: &[T], x: &[T], y: usize, grad: &mut [T]) {
        let outs = self.forward(params, x);
        let logits = outs.last().expect("at least one layer");
        let lse = log_sum_exp(logits);
        // dL/dz for softmax cross-entropy
        let mut delta: Vec<T> = logits.iter().map(|&z| (z - lse).exp()).collect();
        delta[y] -= T::one();

        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = if l == 0 { x } else { outs[l - 1].as_slice() };
            let w_off = layer.offset;
            let b_off = layer.offset + layer.inputs * layer.outputs;
            for r in 0..layer.outputs {
                let d = delta[r];
                let g_row = &mut grad[w_off + r * layer.inputs..w_off + (r + 1) * layer.inputs];
                for (g, &xi) in g_row.iter_mut().zip(input) {
                    *g += d * xi;
                }
                grad[b_off + r] += d;
            }
            if l == 0 {
                break;
            }
            let w = layer.weights(params);
            let below = &self.layers[l - 1];
            let a = &outs[l - 1];
            let mut next = vec![T::zero(); layer.inputs];
            for r in 0..layer.outputs {
                let d = delta[r];
                for (n, &wi) in next
                    .iter_mut()
                    .zip(&w[r * layer.inputs..(r + 1) * layer.inputs])
                {
                    *n += d * wi;
                }
            }
            for (n, &ai) in next.iter_mut().zip(a) {
                *n *= match below.activation {
                    Some(Activation::Relu) => {
                        if ai > T::zero() {
                            T::one()
                        } else {
                            T::zero()
                        }
                    }
                    Some(Activation::Sigmoid) => ai * (T::one() - ai),
                    None => T::one(),
                };
            }
            delta = next;
        }
    }
}

fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + z.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

impl<T: Scalar> FitnessProblem<T> for Mlp<T> {
    fn name(&self) -> String {
        let widths: Vec<String> = self.layers.iter().map(|l| l.outputs.to_string()).collect();
        format!("mlp-{}-{}", self.dataset.d_x, widths.join("-"))
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn train_len(&self) -> usize {
        self.dataset.n_train()
    }

    fn layer_shapes(&self) -> Option<&[LayerShape]> {
        Some(&self.shapes)
    }

    fn validation_loss(&self, params: &[T]) -> T {
        let ds = &self.dataset;
        let total: T = (0..ds.n_valid())
            .map(|i| self.example_loss(params, ds.valid_row(i), ds.valid_y[i]))
            .sum();
        total / T::of(ds.n_valid() as f64)
    }

    fn batch_loss(&self, params: &[T], batch: &[usize]) -> T {
        let ds = &self.dataset;
        let total: T = batch
            .iter()
            .map(|&i| self.example_loss(params, ds.train_row(i), ds.train_y[i]))
            .sum();
        total / T::of(batch.len() as f64)
    }

    fn batch_gradient(&self, params: &[T], batch: &[usize]) -> Vec<T> {
        let ds = &self.dataset;
        let mut grad = vec![T::zero(); self.dim];
        for &i in batch {
            self.accumulate_gradient(params, ds.train_row(i), ds.train_y[i], &mut grad);
        }
        let scale = T::one() / T::of(batch.len() as f64);
        grad.iter_mut().for_each(|g| *g *= scale);
        grad
    }

    /// He-uniform weights under ReLU, Glorot-uniform (scaled by 4 for
    /// sigmoid units) elsewhere; biases zero.
    fn random_params(&self, rng: &mut dyn RngCore) -> Vec<T> {
        let mut out = Vec::with_capacity(self.dim);
        for layer in &self.layers {
            let glorot = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            let limit = match layer.activation {
                Some(Activation::Relu) => (6.0 / layer.inputs as f64).sqrt(),
                Some(Activation::Sigmoid) => 4.0 * glorot,
                None => glorot,
            };
            out.extend(
                (0..layer.inputs * layer.outputs).map(|_| T::of(rng.random_range(-limit..limit))),
            );
            out.extend(std::iter::repeat_n(T::zero(), layer.outputs));
        }
        out
    }
}
