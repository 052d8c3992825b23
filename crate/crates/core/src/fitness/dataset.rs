//! Reproducible Gaussian-mixture classification data.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::scalar::Scalar;

/// Standard deviation of the per-class mean vectors; samples add unit noise.
pub const CLASS_MEAN_SCALE: f64 = 0.35;

/// Train/validation split with row-major feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub seed: u64,
    pub d_x: usize,
    pub classes: usize,
    pub train_x: Vec<T>,
    pub train_y: Vec<usize>,
    pub valid_x: Vec<T>,
    pub valid_y: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn n_train(&self) -> usize {
        self.train_y.len()
    }

    pub fn n_valid(&self) -> usize {
        self.valid_y.len()
    }

    pub fn train_row(&self, i: usize) -> &[T] {
        &self.train_x[i * self.d_x..(i + 1) * self.d_x]
    }

    pub fn valid_row(&self, i: usize) -> &[T] {
        &self.valid_x[i * self.d_x..(i + 1) * self.d_x]
    }

    /// Header `(seed, n_train, n_valid, d_x, classes)` as little-endian `u64`,
    /// then each train row and each validation row as `d_x + 1` little-endian
    /// `f64` values (features followed by the label).
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for h in [
            self.seed,
            self.n_train() as u64,
            self.n_valid() as u64,
            self.d_x as u64,
            self.classes as u64,
        ] {
            w.write_all(&h.to_le_bytes())?;
        }
        for (x, y) in [
            (&self.train_x, &self.train_y),
            (&self.valid_x, &self.valid_y),
        ] {
            for (row, &label) in x.chunks(self.d_x).zip(y.iter()) {
                for v in row {
                    w.write_all(&v.as_f64().to_le_bytes())?;
                }
                w.write_all(&(label as f64).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> std::io::Result<Self> {
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        let mut buf = [0u8; 8];
        let mut header = [0u64; 5];
        for h in header.iter_mut() {
            r.read_exact(&mut buf)?;
            *h = u64::from_le_bytes(buf);
        }
        let [seed, n_train, n_valid, d_x, classes] = header.map(|v| v as usize);
        if d_x == 0 || classes == 0 {
            return Err(bad("dataset header has zero dimension or classes"));
        }
        let mut read_split = |n: usize| -> std::io::Result<(Vec<T>, Vec<usize>)> {
            let mut xs = Vec::with_capacity(n * d_x);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                for _ in 0..d_x {
                    r.read_exact(&mut buf)?;
                    xs.push(T::of(f64::from_le_bytes(buf)));
                }
                r.read_exact(&mut buf)?;
                let label = f64::from_le_bytes(buf);
                if !(label >= 0.0 && label.fract() == 0.0 && (label as usize) < classes) {
                    return Err(bad("label out of range"));
                }
                ys.push(label as usize);
            }
            Ok((xs, ys))
        };
        let (train_x, train_y) = read_split(n_train)?;
        let (valid_x, valid_y) = read_split(n_valid)?;
        Ok(Self {
            seed: seed as u64,
            d_x,
            classes,
            train_x,
            train_y,
            valid_x,
            valid_y,
        })
    }
}

/// Gaussian mixture with one isotropic component per class and uniform labels.
pub fn make_synthetic_dataset<T: Scalar>(
    seed: u64,
    n_train: usize,
    n_valid: usize,
    d_x: usize,
    classes: usize,
) -> Result<Dataset<T>> {
    for (name, v) in [
        ("n_train", n_train),
        ("n_valid", n_valid),
        ("d_x", d_x),
        ("classes", classes),
    ] {
        if v == 0 {
            return Err(Error::config(format!("dataset.{name}"), "must be positive"));
        }
    }
    let mut rng = substream(seed, Stream::Dataset, &[]);
    let means: Vec<f64> = (0..classes * d_x)
        .map(|_| CLASS_MEAN_SCALE * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut draw = |n: usize| {
        let mut xs = Vec::with_capacity(n * d_x);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let y = rng.random_range(0..classes);
            let mean = &means[y * d_x..(y + 1) * d_x];
            xs.extend(
                mean.iter()
                    .map(|&m| T::of(m + rng.sample::<f64, _>(StandardNormal))),
            );
            ys.push(y);
        }
        (xs, ys)
    };
    let (train_x, train_y) = draw(n_train);
    let (valid_x, valid_y) = draw(n_valid);
    Ok(Dataset {
        seed,
        d_x,
        classes,
        train_x,
        train_y,
        valid_x,
        valid_y,
    })
}
