//! Dense 2-D/3-D tensors with reverse-mode automatic differentiation.
//!
//! The engine is deliberately small: exactly the operations the fusion model
//! needs, recorded on a [`Graph`] tape and replayed in reverse by
//! [`Graph::backward`]. Storage and training run in `f32`; gradient checking
//! replays the same graph-building code in `f64` (see [`grad_check`]).

mod gradcheck;
mod graph;

pub use gradcheck::grad_check;
pub use graph::{Graph, Var};

use crate::error::{Error, Result};

/// Element type the engine is generic over. Implemented for `f32` and `f64`.
pub trait Scalar:
    num_traits::Float + std::fmt::Debug + std::fmt::Display + std::iter::Sum + Default + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Row-major dense tensor. The gradient buffer exists iff `requires_grad`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {:?} implies {} elements, got {}", shape, expected, data.len()),
            ));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    /// Marks the tensor as a trainable parameter and allocates its gradient buffer.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self.grad = Some(vec![T::zero(); self.data.len()]);
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        self.grad.as_deref_mut()
    }

    pub fn set_grad(&mut self, g: &[T]) {
        debug_assert_eq!(g.len(), self.data.len());
        if let Some(buf) = self.grad.as_mut() {
            buf.copy_from_slice(g);
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(buf) = self.grad.as_mut() {
            buf.fill(T::zero());
        }
    }

    /// Number of rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape[self.shape.len() - 1]
    }

    pub fn row(&self, r: usize) -> &[T] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// Exact widening copy, keeping the `requires_grad` flag.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        let mut out = Tensor::<U> {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
            requires_grad: false,
            grad: None,
        };
        if self.requires_grad {
            out = out.with_grad();
        }
        out
    }
}
