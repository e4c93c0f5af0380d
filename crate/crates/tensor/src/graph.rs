//! Tape-based reverse-mode differentiation.
//!
//! Every op appends a node to the [`Graph`] in execution order, so the tape
//! index is already a topological order. [`Graph::backward`] walks the tape
//! from the loss towards the leaves once, summing gradients of nodes that feed
//! several consumers.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use crate::{Float, ParamId, ParamStore, Result, Tensor, TensorError};

/// Values handed to an op's backward rule.
pub struct BackwardCtx<'a, T: Float> {
    /// Forward inputs, in the order the op was applied to them.
    pub inputs: &'a [Arc<Tensor<T>>],
    pub output: &'a Tensor<T>,
    /// Gradient of the loss with respect to `output`.
    pub grad: &'a Tensor<T>,
    /// Whether each input needs a gradient; entries marked `false` may be `None`.
    pub needs: &'a [bool],
}

/// Backward rule of a recorded op.
pub trait Backward<T: Float> {
    fn name(&self) -> &'static str;

    /// One gradient per input, shaped like that input.
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>>;
}

struct Node<T: Float> {
    value: Option<Arc<Tensor<T>>>,
    parents: Vec<usize>,
    op: Option<Box<dyn Backward<T>>>,
    requires_grad: bool,
}

struct Tape<T: Float> {
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, usize>,
}

/// Recording context for one forward/backward pass.
pub struct Graph<T: Float> {
    tape: RefCell<Tape<T>>,
    recording: bool,
}

/// Handle to a value produced on a [`Graph`].
#[derive(Clone)]
pub struct Var<'g, T: Float> {
    graph: &'g Graph<T>,
    id: usize,
    value: Arc<Tensor<T>>,
    requires_grad: bool,
}

impl<'g, T: Float> Var<'g, T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> crate::Shape {
        self.value.shape()
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn into_value(self) -> Tensor<T> {
        Arc::try_unwrap(self.value).unwrap_or_else(|arc| (*arc).clone())
    }
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Graph<T> {
    /// A graph that records ops for differentiation.
    pub fn new() -> Self {
        Self { tape: RefCell::new(Tape { nodes: Vec::new(), param_nodes: HashMap::new() }), recording: true }
    }

    /// A graph that only evaluates; nothing is retained for backward.
    pub fn no_grad() -> Self {
        Self { recording: false, ..Self::new() }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.tape.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Arc<Tensor<T>>, node: Node<T>) -> Var<'_, T> {
        let requires_grad = node.requires_grad;
        let mut tape = self.tape.borrow_mut();
        let id = tape.nodes.len();
        tape.nodes.push(node);
        Var { graph: self, id, value, requires_grad }
    }

    fn leaf(&self, value: Arc<Tensor<T>>, requires_grad: bool) -> Var<'_, T> {
        let requires_grad = requires_grad && self.recording;
        let stored = self.recording.then(|| Arc::clone(&value));
        self.push(value, Node { value: stored, parents: Vec::new(), op: None, requires_grad })
    }

    /// A leaf that does not need a gradient (data, labels).
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(Arc::new(value), false)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn variable(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(Arc::new(value), true)
    }

    /// Leaf bound to a registered parameter. Repeated calls return the same node.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Var<'_, T> {
        if self.recording {
            let existing = self.tape.borrow().param_nodes.get(&id).copied();
            if let Some(node) = existing {
                let value = self.tape.borrow().nodes[node].value.clone().expect("recorded node keeps its value");
                return Var { graph: self, id: node, value, requires_grad: true };
            }
        }
        let var = self.leaf(store.value_arc(id), true);
        if self.recording {
            self.tape.borrow_mut().param_nodes.insert(id, var.id);
        }
        var
    }

    /// Records the result of a custom op. `value` must already be computed
    /// from the inputs' values; `op` supplies the backward rule.
    pub fn apply(&self, op: Box<dyn Backward<T>>, inputs: &[&Var<'_, T>], value: Tensor<T>) -> Result<Var<'_, T>> {
        if let Some(index) = value.first_non_finite() {
            return Err(TensorError::NonFinite { op: op.name(), index });
        }
        let value = Arc::new(value);
        let requires_grad = self.recording && inputs.iter().any(|v| v.requires_grad);
        if !self.recording {
            return Ok(self.push(value, Node { value: None, parents: Vec::new(), op: None, requires_grad }));
        }
        for v in inputs {
            debug_assert!(std::ptr::eq(v.graph, self), "input recorded on a different graph");
        }
        let node = Node {
            value: Some(Arc::clone(&value)),
            parents: inputs.iter().map(|v| v.id).collect(),
            op: requires_grad.then_some(op),
            requires_grad,
        };
        Ok(self.push(value, node))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: &Var<'_, T>) -> Result<Grads<T>> {
        if !loss.shape().is_scalar() {
            return Err(TensorError::NonScalarLoss(loss.shape()));
        }
        let tape = self.tape.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = (0..tape.nodes.len()).map(|_| None).collect();
        let params: Vec<(ParamId, usize)> = tape.param_nodes.iter().map(|(&p, &n)| (p, n)).collect();
        if !self.recording || !loss.requires_grad {
            return Ok(Grads { grads, params });
        }
        grads[loss.id] = Some(Tensor::full(loss.shape(), T::one()));

        for id in (0..=loss.id).rev() {
            let node = &tape.nodes[id];
            let Some(op) = node.op.as_ref() else { continue };
            let Some(grad) = grads[id].take() else { continue };
            let inputs: Vec<Arc<Tensor<T>>> = node
                .parents
                .iter()
                .map(|&p| tape.nodes[p].value.clone().expect("recorded node keeps its value"))
                .collect();
            let needs: Vec<bool> = node.parents.iter().map(|&p| tape.nodes[p].requires_grad).collect();
            let output = node.value.as_ref().expect("recorded node keeps its value");
            let ctx = BackwardCtx { inputs: &inputs, output, grad: &grad, needs: &needs };
            let parent_grads = op.backward(&ctx);
            debug_assert_eq!(parent_grads.len(), node.parents.len(), "{} returned wrong arity", op.name());
            for (i, g) in parent_grads.into_iter().enumerate() {
                let (Some(g), true) = (g, needs[i]) else { continue };
                debug_assert_eq!(g.shape(), inputs[i].shape(), "{} gradient shape", op.name());
                let p = node.parents[i];
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(Grads { grads, params })
    }
}

/// Gradients of a loss with respect to the leaves of a [`Graph`].
pub struct Grads<T: Float> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, usize)>,
}

impl<T: Float> Grads<T> {
    /// Gradient for a leaf, if the loss depends on it.
    pub fn get(&self, var: &Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient for a leaf, zeros if the loss does not depend on it.
    pub fn wrt(&self, var: &Var<'_, T>) -> Tensor<T> {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(var.shape()))
    }

    /// Stores the gradient of every registered parameter into `store`;
    /// parameters the loss does not reach receive zeros.
    pub fn write_params(mut self, store: &mut ParamStore<T>) {
        let mut seen = vec![None; store.len()];
        for &(p, node) in &self.params {
            seen[p.0] = self.grads[node].take();
        }
        for (id, g) in seen.into_iter().enumerate() {
            let id = ParamId(id);
            let g = g.unwrap_or_else(|| Tensor::zeros(store.value(id).shape()));
            store.set_grad(id, g);
        }
    }
}
