use std::cell::RefCell;
use std::sync::Arc;

use crate::float::Float;
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::tensor::Tensor;

/// Maps the output gradient to one gradient per parent. The mask says which
/// parents actually need a gradient; entries for the others may be `None`.
pub type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    value: Arc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

/// Records one forward pass for reverse-mode differentiation.
///
/// A tape snapshots the parameter values of a [`ParamStore`] when created;
/// weights selected as trainable become gradient-carrying leaves, everything
/// else is a constant. Drop the tape before mutating the store.
pub struct Tape<T: Float> {
    params: RefCell<Vec<(Arc<Tensor<T>>, bool)>>,
    param_nodes: RefCell<Vec<Option<usize>>>,
    nodes: RefCell<Vec<Node<T>>>,
    training: bool,
    buffer_updates: RefCell<Vec<(ParamId, Tensor<T>)>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Float> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: usize,
}

impl<T: Float> Tape<T> {
    /// Tape where weights whose name satisfies `trainable` receive gradients.
    pub fn new(store: &ParamStore<T>, training: bool, trainable: impl Fn(&str) -> bool) -> Self {
        let params = store
            .iter()
            .map(|(_, e)| {
                let t = e.kind == ParamKind::Weight && trainable(&e.name);
                (e.shared(), t)
            })
            .collect::<Vec<_>>();
        let n = params.len();
        Tape {
            params: RefCell::new(params),
            param_nodes: RefCell::new(vec![None; n]),
            nodes: RefCell::new(Vec::new()),
            training,
            buffer_updates: RefCell::new(Vec::new()),
        }
    }

    /// Evaluation-mode tape with nothing trainable.
    pub fn inference(store: &ParamStore<T>) -> Self {
        Self::new(store, false, |_| false)
    }

    /// Tape with no parameters at all, for free-standing tensor computations.
    pub fn empty() -> Self {
        Tape {
            params: RefCell::new(Vec::new()),
            param_nodes: RefCell::new(Vec::new()),
            nodes: RefCell::new(Vec::new()),
            training: false,
            buffer_updates: RefCell::new(Vec::new()),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(Arc::new(value), false)
    }

    /// Leaf that carries a gradient regardless of the parameter store.
    pub fn variable(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(Arc::new(value), true)
    }

    /// Leaf for parameter `id`; repeated calls return the same node.
    pub fn param(&self, id: ParamId) -> Var<'_, T> {
        if let Some(node) = self.param_nodes.borrow()[id.0] {
            return Var { tape: self, id: node };
        }
        let (value, trainable) = self.params.borrow()[id.0].clone();
        let var = self.push_leaf(value, trainable);
        self.param_nodes.borrow_mut()[id.0] = Some(var.id);
        var
    }

    /// Re-snapshot parameters selected by `select` from `store`. Lets a tape
    /// that was recorded before an optimizer step see the updated values of
    /// parameters it has not touched yet.
    ///
    /// Panics if a selected parameter already has a node on this tape.
    pub fn refresh_params(&self, store: &ParamStore<T>, select: impl Fn(&str) -> bool) {
        let nodes = self.param_nodes.borrow();
        let mut params = self.params.borrow_mut();
        for (id, e) in store.iter() {
            if select(&e.name) {
                assert!(nodes[id.0].is_none(), "parameter {} already used on this tape", e.name);
                params[id.0].0 = e.shared();
            }
        }
    }

    /// Queue a new value for a buffer parameter (applied by the caller after the step).
    pub fn record_buffer_update(&self, id: ParamId, value: Tensor<T>) {
        self.buffer_updates.borrow_mut().push((id, value));
    }

    pub fn take_buffer_updates(&self) -> Vec<(ParamId, Tensor<T>)> {
        std::mem::take(&mut *self.buffer_updates.borrow_mut())
    }

    fn push_leaf(&self, value: Arc<Tensor<T>>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records an operation. `make_backward` is only invoked when some parent
    /// requires a gradient.
    pub fn push_op<'t>(
        &'t self,
        value: Tensor<T>,
        parents: &[Var<'t, T>],
        make_backward: impl FnOnce() -> BackwardFn<T>,
    ) -> Var<'t, T> {
        let mut nodes = self.nodes.borrow_mut();
        let parent_ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
        let requires_grad = parent_ids.iter().any(|&p| nodes[p].requires_grad);
        nodes.push(Node {
            value: Arc::new(value),
            parents: if requires_grad { parent_ids } else { Vec::new() },
            backward: if requires_grad { Some(make_backward()) } else { None },
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn value_of(&self, id: usize) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse pass seeded with `d loss / d loss = 1`.
    pub fn backward(&self, loss: Var<'_, T>) -> Gradients<T> {
        let shape = loss.shape();
        self.backward_with(loss, Tensor::ones(&shape))
    }

    pub fn backward_with(&self, output: Var<'_, T>, seed: Tensor<T>) -> Gradients<T> {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[output.id].value.shape(), seed.shape(), "seed shape mismatch");
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        grads[output.id] = Some(seed);
        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let mask: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let parent_grads = backward(&g, &mask);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for ((&p, pg), need) in node.parents.iter().zip(parent_grads).zip(mask) {
                let Some(pg) = pg else { continue };
                if !need {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[p].value.shape(), "gradient shape mismatch");
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Gradients {
            grads,
            param_nodes: self.param_nodes.borrow().clone(),
        }
    }
}

/// Result of a reverse pass.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    param_nodes: Vec<Option<usize>>,
}

impl<T: Float> Gradients<T> {
    /// Gradient of a leaf variable (intermediate gradients are freed during the pass).
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads[var.id].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.param_nodes
            .get(id.0)
            .copied()
            .flatten()
            .and_then(|n| self.grads[n].as_ref())
    }

    /// All parameter gradients that were reached, ordered by id.
    pub fn params(&self) -> Vec<(ParamId, &Tensor<T>)> {
        self.param_nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| {
                n.and_then(|n| self.grads[n].as_ref())
                    .map(|g| (ParamId(i), g))
            })
            .collect()
    }
}

impl<'t, T: Float> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Arc<Tensor<T>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var<'t, T> {
        let v = self.value();
        self.tape.push_leaf(v, false)
    }

    /// Copy of the value as an owned tensor.
    pub fn to_tensor(&self) -> Tensor<T> {
        (*self.value()).clone()
    }

    pub fn item(&self) -> T {
        self.value().item()
    }
}
