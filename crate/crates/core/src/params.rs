//! Flat parameter vectors and the layer-major encoding of model weights.

use std::io::{Read, Write};
use std::ops::Deref;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Shape of one weight block (a matrix; biases are `rows x 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
}

impl LayerShape {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Total number of scalars described by a list of layer shapes.
pub fn parameter_count(shapes: &[LayerShape]) -> usize {
    shapes.iter().map(LayerShape::len).sum()
}

/// The genotype: every model weight in one flat real-valued vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T>(Vec<T>);

impl<T: Scalar> ParamVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Writes the little-endian binary form: a `u64` length followed by `f64` values.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.0.len() as u64).to_le_bytes())?;
        for v in &self.0 {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> std::io::Result<Self> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        let len = u64::from_le_bytes(buf);
        let len = usize::try_from(len).map_err(|_| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "parameter length overflows usize",
            )
        })?;
        let mut values = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            values.push(T::of(f64::from_le_bytes(buf)));
        }
        Ok(Self(values))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.0.len());
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }
}

impl<T> Deref for ParamVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T: Scalar> From<Vec<T>> for ParamVector<T> {
    fn from(v: Vec<T>) -> Self {
        Self(v)
    }
}

/// Flattens per-layer weights, layer after layer and row-major within a layer.
pub fn encode<T: Scalar>(shapes: &[LayerShape], weights: &[Array2<T>]) -> Result<ParamVector<T>> {
    if shapes.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} layer shapes but {} weight arrays",
            shapes.len(),
            weights.len()
        )));
    }
    let mut out = Vec::with_capacity(parameter_count(shapes));
    for (i, (shape, w)) in shapes.iter().zip(weights).enumerate() {
        if w.dim() != (shape.rows, shape.cols) {
            return Err(Error::Shape(format!(
                "layer {i}: expected {}x{}, got {}x{}",
                shape.rows,
                shape.cols,
                w.nrows(),
                w.ncols()
            )));
        }
        // logical iteration order of ndarray is row-major regardless of memory layout
        out.extend(w.iter().copied());
    }
    Ok(ParamVector(out))
}

/// Inverse of [`encode`].
pub fn decode<T: Scalar>(v: &ParamVector<T>, shapes: &[LayerShape]) -> Result<Vec<Array2<T>>> {
    let expected = parameter_count(shapes);
    if v.dim() != expected {
        return Err(Error::Dimension {
            expected,
            actual: v.dim(),
        });
    }
    let mut offset = 0;
    let mut layers = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let block = v.0[offset..offset + shape.len()].to_vec();
        offset += shape.len();
        let arr = Array2::from_shape_vec((shape.rows, shape.cols), block)
            .map_err(|e| Error::Shape(e.to_string()))?;
        layers.push(arr);
    }
    Ok(layers)
}
