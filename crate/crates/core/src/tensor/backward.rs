use std::collections::{HashMap, HashSet};

use super::{Tensor, TensorId};
use crate::error::{Error, Result};

/// Gradients of a scalar loss with respect to the leaf variables it depends on.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    map: HashMap<TensorId, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        self.map.get(&t.id()).map(Vec::as_slice)
    }

    /// Gradient for `t`, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, t: &Tensor) -> Vec<f64> {
        self.get(t)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; t.numel()])
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Nodes reachable from `root`, inputs before outputs.
pub(crate) fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited: HashSet<TensorId> = HashSet::new();
    // (tensor, children already pushed)
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(inputs) = t.node_inputs() {
            for input in inputs.iter().rev() {
                if input.requires_grad() && !visited.contains(&input.id()) {
                    stack.push((input.clone(), false));
                }
            }
        }
    }
    order
}

fn accumulate(map: &mut HashMap<TensorId, Vec<f64>>, id: TensorId, g: Vec<f64>) {
    match map.get_mut(&id) {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        None => {
            map.insert(id, g);
        }
    }
}

impl Tensor {
    /// Reverse-mode sweep from a single-element loss.
    pub fn backward(&self) -> Result<Gradients> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        let mut out = Gradients::default();
        if !self.requires_grad() {
            return Ok(out);
        }
        let order = topo_order(self);
        let mut pending: HashMap<TensorId, Vec<f64>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);

        for t in order.iter().rev() {
            let Some(grad) = pending.remove(&t.id()) else {
                continue;
            };
            match (t.node_op(), t.node_inputs()) {
                (Some(op), Some(inputs)) => {
                    let needs: Vec<bool> = inputs.iter().map(Tensor::requires_grad).collect();
                    let input_grads = op.backward(inputs, t, &grad, &needs);
                    debug_assert_eq!(input_grads.len(), inputs.len(), "{}", op.name());
                    for ((input, g), need) in inputs.iter().zip(input_grads).zip(needs) {
                        if let (Some(g), true) = (g, need) {
                            debug_assert_eq!(g.len(), input.numel(), "{}", op.name());
                            accumulate(&mut pending, input.id(), g);
                        }
                    }
                }
                _ => {
                    out.map.insert(t.id(), grad);
                }
            }
        }
        Ok(out)
    }
}
