//! Define-by-run computation tape.
//!
//! Every op appends a node holding its output value, its input node ids and
//! a backward rule. Node ids grow monotonically, so the node list is always
//! in topological order and `backward` is a single reverse sweep.

use std::cell::{Ref, RefCell};
use std::collections::BTreeMap;

use crate::error::TensorError;
use crate::tensor::{Element, Tensor};

pub type NodeId = usize;

/// Backward rule of a recorded op.
///
/// `backward` receives the op's input values, its output value and the
/// gradient flowing into the output; it returns one gradient per input
/// (or `None` when an input receives nothing).
pub trait Function<T: Element> {
    fn name(&self) -> &'static str;

    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad_output: &Tensor<T>) -> Vec<Option<Tensor<T>>>;
}

struct Node<T: Element> {
    value: Tensor<T>,
    inputs: Vec<NodeId>,
    func: Option<Box<dyn Function<T>>>,
    requires_grad: bool,
}

/// Ordered record of one forward pass. Confined to a single thread; build a
/// fresh tape for every forward pass.
pub struct Tape<T: Element> {
    nodes: RefCell<Vec<Node<T>>>,
    leaf_grads: RefCell<BTreeMap<NodeId, Tensor<T>>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value recorded on a [`Tape`].
pub struct Var<'t, T: Element> {
    tape: &'t Tape<T>,
    id: NodeId,
}

impl<T: Element> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Element> Copy for Var<'_, T> {}

impl<T: Element> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), leaf_grads: RefCell::new(BTreeMap::new()) }
    }

    fn push(&self, node: Node<T>) -> NodeId {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    /// A leaf that receives gradient.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let id = self.push(Node { value, inputs: Vec::new(), func: None, requires_grad });
        Var { tape: self, id }
    }

    /// Records an op output. The output must be finite; the node requires
    /// grad iff any input does (otherwise the backward rule is dropped).
    pub fn record<F: Function<T> + 'static>(&self, func: F, inputs: &[Var<'_, T>], output: Tensor<T>) -> Result<Var<'_, T>, TensorError> {
        if !output.all_finite() {
            return Err(TensorError::NonFinite { op: func.name() });
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| nodes[v.id].requires_grad)
        };
        let id = self.push(Node {
            value: output,
            inputs: inputs.iter().map(|v| v.id).collect(),
            func: if requires_grad { Some(Box::new(func)) } else { None },
            requires_grad,
        });
        Ok(Var { tape: self, id })
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reverse sweep from a scalar `loss`. Leaf gradients accumulate across
    /// calls; every grad-requiring leaf ends up with a gradient (zeros when
    /// it is not reachable from `loss`).
    pub fn backward(&self, loss: Var<'_, T>) -> Result<(), TensorError> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if !root.value.is_scalar() {
            return Err(TensorError::NonScalar { shape: root.value.shape().to_vec() });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.id).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::ones(root.value.shape().to_vec()));
        let mut leaf_grads = self.leaf_grads.borrow_mut();

        for id in (0..=loss.id).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            let Some(func) = node.func.as_ref() else {
                if node.inputs.is_empty() && node.requires_grad {
                    match leaf_grads.get_mut(&id) {
                        Some(acc) => acc.add_assign(&grad),
                        None => {
                            leaf_grads.insert(id, grad);
                        }
                    }
                }
                continue;
            };
            let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| &nodes[i].value).collect();
            let input_grads = func.backward(&inputs, &node.value, &grad);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", func.name());
            for (&input, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !nodes[input].requires_grad {
                    continue;
                }
                debug_assert_eq!(g.shape(), nodes[input].value.shape(), "{}", func.name());
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
        }

        for (id, node) in nodes.iter().enumerate() {
            if node.inputs.is_empty() && node.requires_grad && !leaf_grads.contains_key(&id) {
                leaf_grads.insert(id, Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        Ok(())
    }

    /// Accumulated gradient of a leaf, if `backward` has run.
    pub fn grad(&self, var: Var<'_, T>) -> Option<Tensor<T>> {
        self.leaf_grads.borrow().get(&var.id).cloned()
    }

    /// Clears accumulated leaf gradients.
    pub fn zero_grad(&self) {
        self.leaf_grads.borrow_mut().clear();
    }
}

impl<'t, T: Element> Var<'t, T> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor<T>> {
        Ref::map(self.tape.nodes.borrow(), |nodes| &nodes[self.id].value)
    }

    /// Copy of the value, detached from the tape.
    pub fn to_tensor(&self) -> Tensor<T> {
        self.value().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> T {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    pub fn backward(&self) -> Result<(), TensorError> {
        self.tape.backward(*self)
    }

    pub fn grad(&self) -> Option<Tensor<T>> {
        self.tape.grad(*self)
    }

    /// Same value as a new constant leaf: gradient stops here.
    pub fn detach(&self) -> Var<'t, T> {
        self.tape.constant(self.to_tensor())
    }

    pub(crate) fn same_tape(&self, other: &Var<'_, T>) -> bool {
        std::ptr::eq(self.tape, other.tape)
    }
}
