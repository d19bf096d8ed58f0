use super::broadcast::{aligned_strides, for_each2};
use super::{numel, Op, Tensor};
use crate::error::{Error, Result};

/// Per-sample, per-channel spatial statistics of an `N×C×h×w` feature map.
#[derive(Clone, Debug)]
pub struct FeatureStats {
    /// `N×C×1×1` spatial mean.
    pub mu: Tensor,
    /// `N×C×1×1` spatial standard deviation, `sqrt(population variance + eps)`.
    pub sigma: Tensor,
}

impl FeatureStats {
    pub fn detach(&self) -> Self {
        FeatureStats {
            mu: self.mu.detach(),
            sigma: self.sigma.detach(),
        }
    }
}

/// Sum over the axes where `out` has extent 1 and `in_shape` does not; `out`
/// keeps the input rank.
struct SumToNode {
    in_shape: Vec<usize>,
}

impl Op for SumToNode {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(
        &self,
        _inputs: &[Tensor],
        output: &Tensor,
        grad: &[f64],
        _needs: &[bool],
    ) -> Vec<Option<Vec<f64>>> {
        let mut g = vec![0.0; numel(&self.in_shape)];
        let s_in = aligned_strides(&self.in_shape, &self.in_shape);
        let s_out = aligned_strides(output.shape(), &self.in_shape);
        for_each2(&self.in_shape, &s_in, &s_out, |_, i, o| g[i] = grad[o]);
        vec![Some(g)]
    }
}

struct ReshapeNode;

impl Op for ReshapeNode {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(
        &self,
        _inputs: &[Tensor],
        _output: &Tensor,
        grad: &[f64],
        _needs: &[bool],
    ) -> Vec<Option<Vec<f64>>> {
        vec![Some(grad.to_vec())]
    }
}

/// Euclidean norm of each leading-axis slice.
struct RowNormNode {
    row: usize,
}

impl Op for RowNormNode {
    fn name(&self) -> &'static str {
        "row_norm"
    }

    fn backward(
        &self,
        inputs: &[Tensor],
        output: &Tensor,
        grad: &[f64],
        _needs: &[bool],
    ) -> Vec<Option<Vec<f64>>> {
        let x = inputs[0].data();
        let mut g = vec![0.0; x.len()];
        for (((g_r, x_r), &norm), &go) in g
            .chunks_exact_mut(self.row)
            .zip(x.chunks_exact(self.row))
            .zip(output.data())
            .zip(grad)
        {
            // subgradient zero at the origin
            if norm > 0.0 {
                for (gi, xi) in g_r.iter_mut().zip(x_r) {
                    *gi = go * xi / norm;
                }
            }
        }
        vec![Some(g)]
    }
}

impl Tensor {
    /// Sum over `axes`, keeping them as extent-1 dimensions.
    pub fn sum_axes(&self, axes: &[usize]) -> Result<Tensor> {
        let mut out = self.shape().to_vec();
        for &a in axes {
            if a >= out.len() {
                return Err(Error::InvalidShape {
                    op: "sum",
                    msg: format!("axis {a} out of range for shape {:?}", self.shape()),
                });
            }
            out[a] = 1;
        }
        let mut data = vec![0.0; numel(&out)];
        let s_in = aligned_strides(self.shape(), self.shape());
        let s_out = aligned_strides(&out, self.shape());
        let x = self.data();
        for_each2(self.shape(), &s_in, &s_out, |_, i, o| data[o] += x[i]);
        Ok(Tensor::from_op(
            out,
            data,
            vec![self.clone()],
            SumToNode {
                in_shape: self.shape().to_vec(),
            },
        ))
    }

    pub fn mean_axes(&self, axes: &[usize]) -> Result<Tensor> {
        let count: usize = axes.iter().filter_map(|&a| self.shape().get(a)).product();
        if count == 0 {
            return Err(Error::InvalidShape {
                op: "mean",
                msg: format!("empty reduction over axes {axes:?} of {:?}", self.shape()),
            });
        }
        Ok(self.sum_axes(axes)?.mul_scalar(1.0 / count as f64))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&self) -> Tensor {
        let axes: Vec<usize> = (0..self.rank()).collect();
        let s = self.sum_axes(&axes).expect("axes in range");
        s.reshape(&[]).expect("single element")
    }

    pub fn mean(&self) -> Result<Tensor> {
        if self.numel() == 0 {
            return Err(Error::InvalidShape {
                op: "mean",
                msg: "mean of an empty tensor".into(),
            });
        }
        Ok(self.sum().mul_scalar(1.0 / self.numel() as f64))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.data().to_vec(),
            vec![self.clone()],
            ReshapeNode,
        ))
    }

    fn expect_nchw(&self, op: &'static str) -> Result<[usize; 4]> {
        match *self.shape() {
            [n, c, h, w] => Ok([n, c, h, w]),
            _ => Err(Error::InvalidShape {
                op,
                msg: format!("expected N×C×h×w, got {:?}", self.shape()),
            }),
        }
    }

    /// Global average pooling: `N×C×h×w -> N×C`.
    pub fn gap(&self) -> Result<Tensor> {
        let [n, c, h, w] = self.expect_nchw("gap")?;
        if h * w == 0 {
            return Err(Error::InvalidShape {
                op: "gap",
                msg: "empty spatial extent".into(),
            });
        }
        self.mean_axes(&[2, 3])?.reshape(&[n, c])
    }

    /// Spatial mean and `sqrt(population variance + eps)` per sample and channel.
    pub fn spatial_mean_std(&self, eps: f64) -> Result<FeatureStats> {
        let [_, _, h, w] = self.expect_nchw("spatial_mean_std")?;
        if h * w == 0 {
            return Err(Error::InvalidShape {
                op: "spatial_mean_std",
                msg: "empty spatial extent".into(),
            });
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
        }
        let mu = self.mean_axes(&[2, 3])?;
        let centered = self.sub(&mu)?;
        let var = centered.square().mean_axes(&[2, 3])?;
        let sigma = var.add_scalar(eps).sqrt()?;
        Ok(FeatureStats { mu, sigma })
    }

    /// Euclidean norm of each slice along the leading axis: `N×… -> N`.
    pub fn row_norm(&self) -> Result<Tensor> {
        let Some(&n) = self.shape().first() else {
            return Err(Error::InvalidShape {
                op: "row_norm",
                msg: "rank-0 input".into(),
            });
        };
        let row = if n == 0 { 0 } else { self.numel() / n };
        if row == 0 {
            return Err(Error::InvalidShape {
                op: "row_norm",
                msg: format!("empty rows in {:?}", self.shape()),
            });
        }
        let data = self
            .data()
            .chunks_exact(row)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        Ok(Tensor::from_op(vec![n], data, vec![self.clone()], RowNormNode { row }))
    }
}
