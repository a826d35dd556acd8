//! Small reverse-mode differentiation core.
//!
//! Parameters live in a [`ParamStore`]; a [`Tape`] records one forward pass as
//! a flat list of vector-valued nodes and replays it backwards to accumulate
//! gradients into the store. Networks are plain descriptions ([`Mlp`],
//! [`Dense`]) holding indices into a store, so one tape can span the
//! parameters of several agents at once.

mod check;
mod dist;
mod layers;
mod optim;
mod tape;

pub use check::{grad_check, GradCheckReport, FD_FLOOR};
pub use dist::Categorical;
pub use layers::{Activation, Dense, Head, Mlp, NetworkSpec};
pub use optim::{AdamConfig, OptimizerState};
pub use tape::{Tape, Var};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::FloatScalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("tape already consumed by a backward pass; run forward again")]
    StaleTape,
    #[error("backward needs a scalar loss, got a node of length {0}")]
    NotScalar(usize),
}

/// A named parameter tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
    #[serde(skip, default = "Vec::new")]
    pub grad: Vec<T>,
}

impl<T: FloatScalar> Tensor<T> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            name: name.into(),
            shape,
            values: vec![T::zero(); len],
            grad: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.clear();
        self.grad.resize(self.values.len(), T::zero());
    }

    fn check(&self) -> Result<(), NnError> {
        let len: usize = self.shape.iter().product();
        if self.values.len() != len {
            return Err(NnError::ShapeMismatch(format!(
                "tensor '{}' has shape {:?} but {} values",
                self.name,
                self.shape,
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("parameter tensor"));
        }
        Ok(())
    }
}

/// Address of a parameter tensor: which store (`slot`) and which tensor in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamRef {
    pub slot: usize,
    pub index: usize,
}

/// Read/write access to parameter tensors addressed by [`ParamRef`].
pub trait Params<T> {
    fn tensor(&self, r: ParamRef) -> &Tensor<T>;
    fn tensor_mut(&mut self, r: ParamRef) -> &mut Tensor<T>;
    /// Every addressable tensor, in a fixed order.
    fn refs(&self) -> Vec<ParamRef>;
}

/// Ordered collection of parameter tensors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: FloatScalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            tensors: Vec::new(),
        }
    }

    /// Adds a tensor initialised uniformly in `±1/sqrt(fan_in)`; returns its index.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> usize {
        let mut t = Tensor::zeros(name, shape);
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        for v in &mut t.values {
            *v = T::lit(rng.random_range(-bound..bound));
        }
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> usize {
        self.tensors.push(Tensor::zeros(name, shape));
        self.tensors.len() - 1
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.zero_grad();
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Concatenation of every tensor's values in store order.
    pub fn flat_values(&self) -> Vec<T> {
        self.tensors
            .iter()
            .flat_map(|t| t.values.iter().copied())
            .collect()
    }

    /// Restores grad buffers after deserialisation and validates shapes.
    pub fn validate(&mut self) -> Result<(), NnError> {
        for t in &mut self.tensors {
            t.check()?;
            t.zero_grad();
        }
        Ok(())
    }

    pub fn same_layout(&self, other: &ParamStore<T>) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape == b.shape)
    }
}

impl<T> Params<T> for ParamStore<T> {
    fn tensor(&self, r: ParamRef) -> &Tensor<T> {
        &self.tensors[r.index]
    }

    fn tensor_mut(&mut self, r: ParamRef) -> &mut Tensor<T> {
        &mut self.tensors[r.index]
    }

    fn refs(&self) -> Vec<ParamRef> {
        (0..self.tensors.len())
            .map(|index| ParamRef { slot: 0, index })
            .collect()
    }
}

impl<T> Params<T> for [ParamStore<T>] {
    fn tensor(&self, r: ParamRef) -> &Tensor<T> {
        &self[r.slot].tensors[r.index]
    }

    fn tensor_mut(&mut self, r: ParamRef) -> &mut Tensor<T> {
        &mut self[r.slot].tensors[r.index]
    }

    fn refs(&self) -> Vec<ParamRef> {
        self.iter()
            .enumerate()
            .flat_map(|(slot, s)| (0..s.tensors.len()).map(move |index| ParamRef { slot, index }))
            .collect()
    }
}

impl<T> Params<T> for Vec<ParamStore<T>> {
    fn tensor(&self, r: ParamRef) -> &Tensor<T> {
        self.as_slice().tensor(r)
    }

    fn tensor_mut(&mut self, r: ParamRef) -> &mut Tensor<T> {
        self.as_mut_slice().tensor_mut(r)
    }

    fn refs(&self) -> Vec<ParamRef> {
        self.as_slice().refs()
    }
}
