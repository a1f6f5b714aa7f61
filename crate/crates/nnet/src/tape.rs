//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! Every operation appends a node holding its value plus a closure that maps
//! the gradient of the node onto gradients of its parents. Nodes are stored
//! in creation order, so a single reverse sweep is a valid topological order.

use crate::error::{NnetError, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Everything a backward closure may read.
pub struct BackwardCtx<'a> {
    pub inputs: Vec<&'a Tensor>,
    pub output: &'a Tensor,
    pub grad: &'a Tensor,
    /// Which parents need a gradient; closures may return `None` for the rest.
    pub needs: Vec<bool>,
}

pub type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
    leaf: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad: false,
            leaf: true,
        })
    }

    /// A differentiable input (parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad: true,
            leaf: true,
        })
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an operation. The backward closure is dropped when no parent
    /// requires a gradient.
    pub fn custom(&mut self, parents: &[Var], value: Tensor, backward: BackwardFn) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(Node {
            value,
            parents: parents.to_vec(),
            backward: requires_grad.then_some(backward),
            requires_grad,
            leaf: false,
        })
    }

    /// Gradients of a scalar `loss` with respect to every differentiable leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.len() != 1 {
            return Err(NnetError::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !loss_node.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::filled(loss_node.value.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(grad) = grads[i].take() else {
                continue;
            };
            let ctx = BackwardCtx {
                inputs: node.parents.iter().map(|p| &self.nodes[p.0].value).collect(),
                output: &node.value,
                grad: &grad,
                needs: node
                    .parents
                    .iter()
                    .map(|p| self.nodes[p.0].requires_grad)
                    .collect(),
            };
            let parent_grads = backward(&ctx);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (p, g) in node.parents.iter().zip(parent_grads) {
                let Some(g) = g else { continue };
                if !self.nodes[p.0].requires_grad {
                    continue;
                }
                debug_assert_eq!(
                    g.len(),
                    self.nodes[p.0].value.len(),
                    "gradient shape for parent of node {i}"
                );
                match &mut grads[p.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        // Interior gradients were consumed during the sweep; only leaves remain.
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.leaf {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
