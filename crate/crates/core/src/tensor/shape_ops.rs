use super::broadcast::{aligned_strides, broadcast_shape, for_each2};
use super::{numel, Op, Tensor};
use crate::error::{Error, Result};

/// `(outer, extent, inner)` block decomposition around `axis`.
fn blocks(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

struct ConcatNode {
    axis: usize,
}

impl Op for ConcatNode {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn backward(
        &self,
        inputs: &[Tensor],
        output: &Tensor,
        grad: &[f64],
        needs: &[bool],
    ) -> Vec<Option<Vec<f64>>> {
        let (outer, total, inner) = blocks(output.shape(), self.axis);
        let mut offset = 0;
        let mut grads = Vec::with_capacity(inputs.len());
        for (input, &need) in inputs.iter().zip(needs) {
            let extent = input.shape()[self.axis];
            if need {
                let mut g = Vec::with_capacity(input.numel());
                for o in 0..outer {
                    let start = (o * total + offset) * inner;
                    g.extend_from_slice(&grad[start..start + extent * inner]);
                }
                grads.push(Some(g));
            } else {
                grads.push(None);
            }
            offset += extent;
        }
        grads
    }
}

struct NarrowNode {
    axis: usize,
    start: usize,
}

impl Op for NarrowNode {
    fn name(&self) -> &'static str {
        "narrow"
    }

    fn backward(
        &self,
        inputs: &[Tensor],
        output: &Tensor,
        grad: &[f64],
        _needs: &[bool],
    ) -> Vec<Option<Vec<f64>>> {
        let (outer, total, inner) = blocks(inputs[0].shape(), self.axis);
        let len = output.shape()[self.axis];
        let mut g = vec![0.0; inputs[0].numel()];
        for o in 0..outer {
            let dst = (o * total + self.start) * inner;
            let src = o * len * inner;
            g[dst..dst + len * inner].copy_from_slice(&grad[src..src + len * inner]);
        }
        vec![Some(g)]
    }
}

struct ExpandNode;

impl Op for ExpandNode {
    fn name(&self) -> &'static str {
        "expand"
    }

    fn backward(
        &self,
        inputs: &[Tensor],
        output: &Tensor,
        grad: &[f64],
        _needs: &[bool],
    ) -> Vec<Option<Vec<f64>>> {
        let out = output.shape();
        let mut g = vec![0.0; inputs[0].numel()];
        let s_out = aligned_strides(out, out);
        let s_in = aligned_strides(inputs[0].shape(), out);
        for_each2(out, &s_out, &s_in, |_, o, i| g[i] += grad[o]);
        vec![Some(g)]
    }
}

impl Tensor {
    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::InvalidShape {
            op: "concat",
            msg: "nothing to concatenate".into(),
        })?;
        if axis >= first.rank() {
            return Err(Error::InvalidShape {
                op: "concat",
                msg: format!("axis {axis} out of range for {:?}", first.shape()),
            });
        }
        let mut out = first.shape().to_vec();
        out[axis] = 0;
        for p in parts {
            let compatible = p.rank() == first.rank()
                && p.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            out[axis] += p.shape()[axis];
        }
        let (outer, _, _) = blocks(&out, axis);
        let mut data = Vec::with_capacity(numel(&out));
        for o in 0..outer {
            for p in parts {
                let (_, extent, inner) = blocks(p.shape(), axis);
                let start = o * extent * inner;
                data.extend_from_slice(&p.data()[start..start + extent * inner]);
            }
        }
        Ok(Tensor::from_op(out, data, parts.to_vec(), ConcatNode { axis }))
    }

    /// `N×C1×h×w ++ N×C2×h×w -> N×(C1+C2)×h×w`.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 4 || other.rank() != 4 {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        Tensor::concat(&[self.clone(), other.clone()], 1)
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() || start + len > self.shape()[axis] {
            return Err(Error::InvalidShape {
                op: "narrow",
                msg: format!(
                    "range {start}..{} on axis {axis} of {:?}",
                    start + len,
                    self.shape()
                ),
            });
        }
        let (outer, total, inner) = blocks(self.shape(), axis);
        let mut out = self.shape().to_vec();
        out[axis] = len;
        let mut data = Vec::with_capacity(numel(&out));
        for o in 0..outer {
            let src = (o * total + start) * inner;
            data.extend_from_slice(&self.data()[src..src + len * inner]);
        }
        Ok(Tensor::from_op(
            out,
            data,
            vec![self.clone()],
            NarrowNode { axis, start },
        ))
    }

    /// Broadcast to `shape`; gradients are summed back.
    pub fn expand(&self, shape: &[usize]) -> Result<Tensor> {
        match broadcast_shape(self.shape(), shape) {
            Some(out) if out == shape => {}
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "expand",
                    lhs: self.shape().to_vec(),
                    rhs: shape.to_vec(),
                })
            }
        }
        let mut data = vec![0.0; numel(shape)];
        let s_out = aligned_strides(shape, shape);
        let s_in = aligned_strides(self.shape(), shape);
        let x = self.data();
        for_each2(shape, &s_out, &s_in, |_, o, i| data[o] = x[i]);
        Ok(Tensor::from_op(
            shape.to_vec(),
            data,
            vec![self.clone()],
            ExpandNode,
        ))
    }

    /// Repeat a batch-1 tensor `n` times along the leading axis.
    pub fn repeat_batch(&self, n: usize) -> Result<Tensor> {
        if self.shape().first() != Some(&1) {
            return Err(Error::InvalidShape {
                op: "repeat_batch",
                msg: format!("expected leading extent 1, got {:?}", self.shape()),
            });
        }
        let mut shape = self.shape().to_vec();
        shape[0] = n;
        self.expand(&shape)
    }
}
