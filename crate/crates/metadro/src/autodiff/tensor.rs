//! Dense row-major f64 tensors.

use crate::error::{Error, Result};

/// A dense array of f64 values with an explicit shape. Row-major layout.
/// Immutable once constructed; all mutation goes through new tensors.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; numel] }
    }

    pub fn ones(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![1.0; numel] }
    }

    /// Identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor { shape: vec![n, n], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// True if this tensor holds exactly one element (any rank).
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::Dimension(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )))
        }
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> Result<usize> {
        self.dims2().map(|(r, _)| r)
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::Dimension(format!("expected 2-D tensor, got {:?}", other))),
        }
    }

    pub fn get2(&self, r: usize, c: usize) -> f64 {
        let cols = self.shape[1];
        self.data[r * cols + c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Squared l2 norm of all elements.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// View of one row of a 2-D tensor as a new [1, cols] tensor.
    pub fn row(&self, r: usize) -> Result<Tensor> {
        let (_, cols) = self.dims2()?;
        Ok(Tensor {
            shape: vec![1, cols],
            data: self.data[r * cols..(r + 1) * cols].to_vec(),
        })
    }
}

/// Stack equal-length vectors into a [n, d] matrix.
pub fn stack_rows(rows: &[&Tensor]) -> Result<Tensor> {
    if rows.is_empty() {
        return Err(Error::Dimension("stack_rows on empty slice".into()));
    }
    let d = rows[0].numel();
    let mut data = Vec::with_capacity(rows.len() * d);
    for t in rows {
        if t.numel() != d {
            return Err(Error::Dimension(format!(
                "stack_rows: row of length {} among rows of length {}",
                t.numel(),
                d
            )));
        }
        data.extend_from_slice(t.data());
    }
    Tensor::matrix(rows.len(), d, data)
}
