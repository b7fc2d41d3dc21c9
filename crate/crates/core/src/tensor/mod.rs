//! Dense f64 arrays with tape-based reverse-mode automatic differentiation.
//!
//! The model sizes in this crate are tiny (hidden dimensions in the tens), so
//! everything is plain contiguous `Vec<f64>` in row-major order. Differentiable
//! computations run through [`Tape`]/[`Var`]; the tape is rebuilt on every
//! forward pass.

mod check;
mod tape;

pub use check::{grad_check, GradCheckReport};
pub use tape::{Tape, Var};

use std::rc::Rc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("backward requires a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
}

/// A dense row-major array of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Build a `[rows, cols]` matrix from row slices.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, TensorError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(TensorError::ShapeMismatch(format!(
                    "ragged rows: expected {}, got {}",
                    c,
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> Result<f64, TensorError> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(TensorError::NotScalar(self.shape.clone()))
        }
    }

    /// Element of a `[rows, cols]` matrix.
    pub fn at2(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[row * self.shape[1] + col]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn rc(self) -> Rc<Tensor> {
        Rc::new(self)
    }
}

/// Iteration geometry for an axis of a shape: `outer` blocks, each holding
/// `axis_len` lanes of `inner` contiguous elements.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AxisGeometry {
    pub outer: usize,
    pub axis_len: usize,
    pub inner: usize,
}

pub(crate) fn axis_geometry(shape: &[usize], axis: usize) -> Result<AxisGeometry, TensorError> {
    if axis >= shape.len() {
        return Err(TensorError::ShapeMismatch(format!(
            "axis {} out of range for shape {:?}",
            axis, shape
        )));
    }
    Ok(AxisGeometry {
        outer: shape[..axis].iter().product(),
        axis_len: shape[axis],
        inner: shape[axis + 1..].iter().product(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn scalar_roundtrip() {
        let t = Tensor::scalar(4.25);
        assert!(t.is_scalar());
        assert_eq!(t.scalar_value().unwrap(), 4.25);
    }

    #[test]
    fn from_rows_rejects_ragged() {
        assert!(Tensor::from_rows(&[&[1.0, 2.0], &[3.0]]).is_err());
        let m = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(m.at2(1, 0), 3.0);
    }

    #[test]
    fn axis_geometry_blocks() {
        let g = axis_geometry(&[2, 3, 4], 1).unwrap();
        assert_eq!((g.outer, g.axis_len, g.inner), (2, 3, 4));
        assert!(axis_geometry(&[2], 1).is_err());
    }
}
