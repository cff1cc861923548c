use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use super::{DiffError, Float, ParamId, ParamStore, Tensor};

/// Maps the upstream gradient of a node to one gradient per parent
/// (`None` for parents that take no gradient).
pub(crate) type BackwardFn<F> = Box<dyn Fn(&Tensor<F>) -> Vec<Option<Tensor<F>>>>;

struct Node<F> {
    value: Rc<Tensor<F>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<F>>,
    requires_grad: bool,
}

/// Append-only record of a forward computation. Nodes are pushed in
/// execution order, which is a topological order, so the backward pass is a
/// single reverse sweep.
pub struct Tape<'p, F: Float> {
    params: &'p ParamStore<F>,
    nodes: RefCell<Vec<Node<F>>>,
    param_nodes: RefCell<BTreeMap<ParamId, usize>>,
    grad_enabled: bool,
}

/// Handle to a node on a [`Tape`].
pub struct Var<'g, F: Float> {
    pub(crate) tape: &'g Tape<'g, F>,
    pub(crate) id: usize,
}

impl<F: Float> Clone for Var<'_, F> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<F: Float> Copy for Var<'_, F> {}

impl<F: Float> fmt::Debug for Var<'_, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value().shape())
    }
}

impl<'p, F: Float> Tape<'p, F> {
    /// A tape that records backward rules.
    pub fn new(params: &'p ParamStore<F>) -> Self {
        Self::with_grad(params, true)
    }

    /// A tape for inference only: no backward closures are built.
    pub fn inference(params: &'p ParamStore<F>) -> Self {
        Self::with_grad(params, false)
    }

    fn with_grad(params: &'p ParamStore<F>, grad_enabled: bool) -> Self {
        Self {
            params,
            nodes: RefCell::new(Vec::new()),
            param_nodes: RefCell::new(BTreeMap::new()),
            grad_enabled,
        }
    }

    pub fn params(&self) -> &'p ParamStore<F> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&self, id: ParamId) -> Var<'_, F> {
        if let Some(&node) = self.param_nodes.borrow().get(&id) {
            return Var { tape: self, id: node };
        }
        let p = self.params.param(id);
        let node = self.push_leaf(p.value.clone(), p.trainable && self.grad_enabled);
        self.param_nodes.borrow_mut().insert(id, node);
        Var { tape: self, id: node }
    }

    pub fn constant(&self, value: Tensor<F>) -> Var<'_, F> {
        let id = self.push_leaf(value, false);
        Var { tape: self, id }
    }

    /// Leaf that receives a gradient without being a stored parameter.
    pub fn variable(&self, value: Tensor<F>) -> Var<'_, F> {
        let id = self.push_leaf(value, self.grad_enabled);
        Var { tape: self, id }
    }

    fn push_leaf(&self, value: Tensor<F>, requires_grad: bool) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            parents: Vec::new(),
            backward: None,
            requires_grad,
        });
        nodes.len() - 1
    }

    pub(crate) fn value(&self, id: usize) -> Rc<Tensor<F>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Records an op node. `make_backward` runs only when some parent
    /// carries a gradient.
    pub(crate) fn push(
        &self,
        value: Tensor<F>,
        parents: &[usize],
        make_backward: impl FnOnce() -> BackwardFn<F>,
    ) -> Var<'_, F> {
        let requires_grad = self.grad_enabled && parents.iter().any(|&p| self.requires_grad(p));
        let backward = requires_grad.then(make_backward);
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            parents: parents.to_vec(),
            backward,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var<'_, F>) -> Result<Gradients<F>, DiffError> {
        let nodes = self.nodes.borrow();
        let out = &nodes[output.id];
        if out.value.numel() != 1 {
            return Err(DiffError::Contract(format!(
                "backward needs a scalar output, got shape {:?}",
                out.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..nodes.len()).map(|_| None).collect();
        grads[output.id] = Some(Tensor::full(out.value.shape().to_vec(), F::one()));

        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            let Some(backward) = &node.backward else {
                continue;
            };
            let Some(g) = grads[id].as_ref() else {
                continue;
            };
            let parent_grads = backward(g);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }

        let mut params = BTreeMap::new();
        for (&pid, &node) in self.param_nodes.borrow().iter() {
            if let Some(g) = grads[node].take() {
                params.insert(pid, g);
            }
        }
        Ok(Gradients { nodes: grads, params })
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients<F> {
    nodes: Vec<Option<Tensor<F>>>,
    params: BTreeMap<ParamId, Tensor<F>>,
}

impl<F: Float> Gradients<F> {
    /// Gradient for a non-parameter node (variables, intermediates).
    pub fn wrt(&self, var: Var<'_, F>) -> Option<&Tensor<F>> {
        self.nodes.get(var.id).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<F>> {
        self.params.get(&id)
    }

    pub fn params(&self) -> &BTreeMap<ParamId, Tensor<F>> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<ParamId, Tensor<F>> {
        self.params
    }
}

impl<'g, F: Float> Var<'g, F> {
    pub fn value(&self) -> Rc<Tensor<F>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn tape(&self) -> &'g Tape<'g, F> {
        self.tape
    }

    /// Value of a single-element node.
    pub fn item(&self) -> F {
        self.value().item()
    }
}
