//! Named parameter storage and per-tape binding.

use std::cell::RefCell;
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::tensor::{Element, Tensor};

/// Index of one parameter tensor inside a [`ParamStore`]. Two layers holding
/// the same `ParamId` share one storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T: Element> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), values: Vec::new() }
    }

    /// Registers a tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Conv-style weight drawn from `N(0, std²)` in f64 and cast, so f32 and
    /// f64 stores built from the same seed agree up to rounding.
    pub fn add_gaussian<R: Rng + ?Sized>(&mut self, name: impl Into<String>, shape: Vec<usize>, std: f64, rng: &mut R) -> ParamId {
        let t = Tensor::<f64>::randn(shape, std, rng).cast();
        self.add(name, t)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.names.iter().zip(&self.values).enumerate().map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Hash of every name, shape and value bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (name, v) in self.names.iter().zip(&self.values) {
            name.hash(&mut h);
            v.shape().hash(&mut h);
            for x in v.data() {
                x.as_f64().to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Replaces a value, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<(), TensorError> {
        if value.shape() != self.values[id.0].shape() {
            return Err(TensorError::ShapeMismatch {
                op: "ParamStore::set",
                left: self.values[id.0].shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }
}

/// Binds a [`ParamStore`] to one tape. Each parameter becomes a single leaf
/// the first time it is used, so every use of a shared `ParamId` feeds the
/// same gradient accumulator.
pub struct ParamScope<'s, 't, T: Element> {
    store: &'s ParamStore<T>,
    tape: &'t Tape<T>,
    trainable: bool,
    bound: RefCell<Vec<Option<Var<'t, T>>>>,
}

impl<'s, 't, T: Element> ParamScope<'s, 't, T> {
    /// `trainable = false` records parameters as constants.
    pub fn new(store: &'s ParamStore<T>, tape: &'t Tape<T>, trainable: bool) -> Self {
        ParamScope { store, tape, trainable, bound: RefCell::new(vec![None; store.len()]) }
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn store(&self) -> &'s ParamStore<T> {
        self.store
    }

    pub fn var(&self, id: ParamId) -> Var<'t, T> {
        let mut bound = self.bound.borrow_mut();
        *bound[id.0].get_or_insert_with(|| self.tape.leaf(self.store.get(id).clone(), self.trainable))
    }

    /// Routes every later use of `id` to `var`, e.g. to differentiate a
    /// network with respect to one of its parameters in a gradient check.
    pub fn bind_as(&self, id: ParamId, var: Var<'t, T>) -> Result<(), TensorError> {
        if var.value().shape() != self.store.get(id).shape() {
            return Err(TensorError::ShapeMismatch {
                op: "ParamScope::bind_as",
                left: self.store.get(id).shape().to_vec(),
                right: var.shape(),
            });
        }
        self.bound.borrow_mut()[id.0] = Some(var);
        Ok(())
    }

    /// Gradients of every bound parameter after `backward`, in id order.
    /// Parameters never touched on this tape are omitted.
    pub fn grads(&self) -> Vec<(ParamId, Tensor<T>)> {
        self.bound.borrow().iter().enumerate().filter_map(|(i, v)| v.and_then(|v| v.grad()).map(|g| (ParamId(i), g))).collect()
    }
}
