//! Dense `f64` tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable, reference-counted value. Operations on tensors
//! that require gradients record a node holding their inputs and an [`Op`]
//! implementation; [`Tensor::backward`] walks that graph in reverse
//! topological order and returns the gradients of every leaf variable.
//!
//! ```
//! use tdt::tensor::Tensor;
//!
//! let w = Tensor::var(&[3], vec![1.0, 2.0, 3.0]).unwrap();
//! let x = Tensor::from_vec(vec![4.0, 5.0, 6.0]);
//! let loss = w.mul(&x).unwrap().sum();
//! let grads = loss.backward().unwrap();
//! assert_eq!(grads.wrt(&w), vec![4.0, 5.0, 6.0]);
//! ```

mod backward;
mod broadcast;
pub mod gradcheck;
mod linalg;
mod ops;
mod params;
mod reduce;
mod shape_ops;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

pub use backward::Gradients;
pub use broadcast::broadcast_shape;
pub use ops::{BinaryOp, UnaryOp};
pub use params::{ParamEntry, ParamStore};
pub use reduce::FeatureStats;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(u64);

impl TensorId {
    fn fresh() -> Self {
        TensorId(NEXT_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// Local derivative rule of a recorded operation.
///
/// Implementations receive the gradient of the loss with respect to the
/// operation's output and return one gradient buffer per input. Inputs whose
/// `needs` flag is false may be skipped by returning `None`.
pub trait Op: Send + Sync {
    fn name(&self) -> &'static str;

    fn backward(
        &self,
        inputs: &[Tensor],
        output: &Tensor,
        grad: &[f64],
        needs: &[bool],
    ) -> Vec<Option<Vec<f64>>>;

    /// Distance from the evaluated inputs to the nearest point where this op
    /// is not differentiable. `None` for smooth ops.
    fn kink_margin(&self, _inputs: &[Tensor]) -> Option<f64> {
        None
    }
}

struct Node {
    inputs: Vec<Tensor>,
    op: Box<dyn Op>,
}

struct Inner {
    id: TensorId,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    node: Option<Node>,
}

#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, node: Option<Node>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Arc::new(Inner {
            id: TensorId::fresh(),
            shape,
            data,
            requires_grad,
            node,
        }))
    }

    /// Constant tensor; gradients never flow into it.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::InvalidShape {
                op: "tensor",
                msg: format!("shape {shape:?} needs {} values, got {}", numel(shape), data.len()),
            });
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// Leaf variable whose gradient is reported by [`Tensor::backward`].
    pub fn var(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let t = Self::new(shape, data)?;
        Ok(t.into_var())
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::build(vec![n], data, false, None)
    }

    /// Rank-0 tensor.
    pub fn scalar(value: f64) -> Self {
        Self::build(Vec::new(), vec![value], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::build(shape.to_vec(), vec![value; numel(shape)], false, None)
    }

    /// Result of a custom operation. The node is recorded only when some input
    /// requires gradients.
    pub fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        inputs: Vec<Tensor>,
        op: impl Op + 'static,
    ) -> Self {
        let requires_grad = inputs.iter().any(Tensor::requires_grad);
        let node = requires_grad.then(|| Node {
            inputs,
            op: Box::new(op),
        });
        Self::build(shape, data, requires_grad, node)
    }

    pub fn id(&self) -> TensorId {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        match self.0.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::InvalidShape {
                op: "item",
                msg: format!("expected one element, shape is {:?}", self.shape()),
            }),
        }
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.clone(), false, None)
    }

    /// Fresh leaf variable with the same values.
    pub fn into_var(self) -> Self {
        let (shape, data) = match Arc::try_unwrap(self.0) {
            Ok(inner) => (inner.shape, inner.data),
            Err(shared) => (shared.shape.clone(), shared.data.clone()),
        };
        Self::build(shape, data, true, None)
    }

    pub(crate) fn node_inputs(&self) -> Option<&[Tensor]> {
        self.0.node.as_ref().map(|n| n.inputs.as_slice())
    }

    pub(crate) fn node_op(&self) -> Option<&dyn Op> {
        self.0.node.as_ref().map(|n| n.op.as_ref())
    }

    /// Smallest kink margin over every recorded op reachable from `self`.
    /// Infinite when the graph contains only smooth ops.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for t in backward::topo_order(self) {
            if let (Some(op), Some(inputs)) = (t.node_op(), t.node_inputs()) {
                if let Some(m) = op.kink_margin(inputs) {
                    margin = margin.min(m);
                }
            }
        }
        margin
    }

    /// Names of recorded ops reachable from `self`, in topological order.
    pub fn op_names(&self) -> Vec<&'static str> {
        backward::topo_order(self)
            .iter()
            .filter_map(|t| t.node_op().map(|op| op.name()))
            .collect()
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.shape());
        if self.numel() <= 16 {
            s.field("data", &self.data());
        }
        if let Some(op) = self.node_op() {
            s.field("op", &op.name());
        }
        s.finish()
    }
}

#[cfg(test)]
mod tests;
