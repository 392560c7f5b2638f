//! Dense row-major tensor of f64 values.

use crate::error::{Error, Result};

/// N-dimensional array in C (row-major) order. All dimensions are at least
/// one and the element count always equals the shape product.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape {
                primitive: "tensor".into(),
                details: format!("invalid shape {shape:?}"),
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape {
                primitive: "tensor".into(),
                details: format!(
                    "shape {shape:?} wants {expected} elements, got {}",
                    data.len()
                ),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(
                "tensor created with non-finite values".into(),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Row-major matrix constructor.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.len() != 1 {
            return Err(Error::Shape {
                primitive: "item".into(),
                details: format!("expected one element, shape is {:?}", self.shape),
            });
        }
        Ok(self.data[0])
    }

    pub(crate) fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }
}
