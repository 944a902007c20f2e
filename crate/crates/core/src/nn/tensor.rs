//! N-dimensional value buffer with an optional paired gradient buffer.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() || dims.is_empty() {
            return Err(Error::shape(
                format!("{dims:?} ({n} values)"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { dims, data, grad: None })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n: usize = dims.iter().product();
        Self { dims, data: vec![0.0; n], grad: None }
    }

    pub fn scalar_filled(dims: Vec<usize>, v: f64) -> Self {
        let n: usize = dims.iter().product();
        Self { dims, data: vec![v; n], grad: None }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
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

    /// Allocates the gradient buffer (zeroed) if absent.
    pub fn ensure_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data.len()]);
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Splits value and gradient buffers for simultaneous mutable access.
    pub fn data_and_grad_mut(&mut self) -> (&mut [f64], Option<&mut [f64]>) {
        (&mut self.data, self.grad.as_deref_mut())
    }

    pub fn same_dims(&self, other: &Tensor) -> bool {
        self.dims == other.dims
    }

    pub fn check_dims(&self, expected: &[usize]) -> Result<()> {
        if self.dims == expected {
            Ok(())
        } else {
            Err(Error::shape(format!("{expected:?}"), format!("{:?}", self.dims)))
        }
    }
}
