use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::error::TensorError;
use crate::ops::Op;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub(crate) struct Node {
    pub(crate) id: u64,
    pub(crate) data: Vec<f64>,
    pub(crate) shape: Vec<usize>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: RefCell<Option<Vec<f64>>>,
    pub(crate) op: Op,
}

/// A dense row-major f64 tensor. Cloning is cheap (shared node); values are
/// immutable once created, gradients accumulate behind a `RefCell`.
///
/// Tensors deliberately are not `Send`: a computation graph belongs to one
/// thread. Distinct graphs on distinct threads are fine.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) node: Rc<Node>,
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub(crate) fn from_node(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Op) -> Tensor {
        debug_assert_eq!(data.len(), numel_of(&shape));
        Tensor {
            node: Rc::new(Node {
                id: next_id(),
                data,
                shape,
                requires_grad,
                grad: RefCell::new(None),
                op,
            }),
        }
    }

    /// Leaf tensor that does not participate in differentiation.
    pub fn constant(data: Vec<f64>, shape: &[usize]) -> Result<Tensor, TensorError> {
        Tensor::leaf(data, shape, false)
    }

    /// Leaf tensor; set `requires_grad` to collect a gradient during backward.
    pub fn leaf(data: Vec<f64>, shape: &[usize], requires_grad: bool) -> Result<Tensor, TensorError> {
        if data.len() != numel_of(shape) {
            return Err(TensorError::InvalidShape {
                op: "leaf",
                shape: shape.to_vec(),
                detail: format!("shape implies {} elements, got {}", numel_of(shape), data.len()),
            });
        }
        Ok(Tensor::from_node(data, shape.to_vec(), requires_grad, Op::Leaf))
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::from_node(vec![v], vec![], false, Op::Leaf)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::from_node(vec![0.0; numel_of(shape)], shape.to_vec(), false, Op::Leaf)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::from_node(vec![1.0; numel_of(shape)], shape.to_vec(), false, Op::Leaf)
    }

    pub fn full(shape: &[usize], v: f64) -> Tensor {
        Tensor::from_node(vec![v; numel_of(shape)], shape.to_vec(), false, Op::Leaf)
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.node.data
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_finite(&self) -> bool {
        self.node.data.iter().all(|v| v.is_finite())
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64, TensorError> {
        if self.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "item() requires a single-element tensor, shape is {:?}",
                self.shape()
            )));
        }
        Ok(self.node.data[0])
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.node.grad.borrow().clone()
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        if !self.node.requires_grad {
            return;
        }
        let mut slot = self.node.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode differentiation from a scalar root. Gradients accumulate
    /// into every reachable tensor created with `requires_grad`.
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward() requires a scalar root, shape is {:?}",
                self.shape()
            )));
        }
        self.accumulate_grad(&[1.0]);
        // Children always have larger ids than their parents, so descending id
        // order is a valid reverse topological order.
        let mut nodes = self.collect_graph();
        nodes.sort_by(|a, b| b.node.id.cmp(&a.node.id));
        for t in &nodes {
            let grad = match t.node.grad.borrow().clone() {
                Some(g) => g,
                None => continue,
            };
            if !t.node.requires_grad {
                continue;
            }
            t.node.op.backward(t, &grad);
        }
        Ok(())
    }

    /// Every tensor reachable from this one through recorded ops, unordered.
    pub(crate) fn collect_graph(&self) -> Vec<Tensor> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.node.id) {
                continue;
            }
            for p in t.node.op.parents() {
                stack.push(p);
            }
            out.push(t);
        }
        out
    }

    /// Walks the graph in creation order and reports the first op whose output
    /// contains a non-finite value while all of its inputs are finite.
    pub fn first_non_finite_op(&self) -> Option<String> {
        let mut nodes = self.collect_graph();
        nodes.sort_by_key(|t| t.node.id);
        for t in &nodes {
            if t.is_finite() {
                continue;
            }
            if t.node.op.parents().iter().all(|p| p.is_finite()) {
                return Some(t.node.op.name().to_string());
            }
        }
        None
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .field("data", &self.node.data)
            .finish()
    }
}
