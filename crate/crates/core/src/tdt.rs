//! Fused center, sign map, and the feature-difference to label-difference head.

use crate::distributions::{delta_tau_with_stats, standardize, TriangularDist};
use crate::error::{Error, Result};
use crate::tensor::{FeatureStats, Tensor};

/// Fusion layers `θ` plus the linear head `f = fc ∘ gap`.
///
/// The first fusion layer maps `2C -> C` channels; further layers (if any)
/// map `C -> C` with a relu in between. The head output is multiplied by a
/// fixed `output_scale`.
#[derive(Clone, Debug)]
pub struct TdtHead {
    fusion: Vec<(Tensor, Tensor)>,
    head_w: Tensor,
    head_b: Tensor,
    output_scale: f64,
    dist: TriangularDist,
    eps: f64,
}

fn bad_shape(op: &'static str, msg: String) -> Error {
    Error::InvalidShape { op, msg }
}

impl TdtHead {
    pub fn new(
        fusion: Vec<(Tensor, Tensor)>,
        head_w: Tensor,
        head_b: Tensor,
        output_scale: f64,
        dist: TriangularDist,
        eps: f64,
    ) -> Result<Self> {
        let &[c, label_dim] = head_w.shape() else {
            return Err(bad_shape("tdt_head", format!("head weight {:?}", head_w.shape())));
        };
        if c == 0 || label_dim == 0 {
            return Err(bad_shape("tdt_head", "zero channels or label_dim".into()));
        }
        if head_b.shape() != [label_dim] {
            return Err(bad_shape("tdt_head", format!("head bias {:?}", head_b.shape())));
        }
        if fusion.is_empty() {
            return Err(bad_shape("tdt_head", "at least one fusion layer".into()));
        }
        for (l, (w, b)) in fusion.iter().enumerate() {
            let c_in = if l == 0 { 2 * c } else { c };
            if w.shape() != [c, c_in] || b.shape() != [c] {
                return Err(bad_shape(
                    "tdt_head",
                    format!("fusion layer {l}: weight {:?}, bias {:?}, want [{c}, {c_in}]", w.shape(), b.shape()),
                ));
            }
        }
        if !(output_scale.is_finite() && output_scale > 0.0) {
            return Err(Error::InvalidArgument(format!("output_scale must be positive, got {output_scale}")));
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
        }
        Ok(TdtHead {
            fusion,
            head_w,
            head_b,
            output_scale,
            dist,
            eps,
        })
    }

    pub fn channels(&self) -> usize {
        self.head_w.shape()[0]
    }

    pub fn label_dim(&self) -> usize {
        self.head_w.shape()[1]
    }

    pub fn dist(&self) -> TriangularDist {
        self.dist
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    fn check_features(&self, op: &'static str, x: &Tensor) -> Result<()> {
        match x.shape() {
            &[_, c, _, _] if c == self.channels() => Ok(()),
            s => Err(Error::ShapeMismatch {
                op,
                lhs: s.to_vec(),
                rhs: vec![self.channels()],
            }),
        }
    }

    /// First-layer contribution of the first input (no bias).
    pub fn project_first(&self, xg1: &Tensor) -> Result<Tensor> {
        self.check_features("fuse_center", xg1)?;
        let c = self.channels();
        let w = self.fusion[0].0.narrow(1, 0, c)?;
        xg1.conv1x1(&w, &Tensor::zeros(&[c]))
    }

    /// First-layer contribution of the second input, bias included.
    pub fn project_second(&self, xg2: &Tensor) -> Result<Tensor> {
        self.check_features("fuse_center", xg2)?;
        let c = self.channels();
        let (w, b) = &self.fusion[0];
        xg2.conv1x1(&w.narrow(1, c, c)?, b)
    }

    /// Remaining fusion layers applied to the summed first-layer projections.
    pub fn fusion_tail(&self, z: &Tensor) -> Result<Tensor> {
        let mut z = z.clone();
        for (w, b) in &self.fusion[1..] {
            z = z.relu().conv1x1(w, b)?;
        }
        Ok(z)
    }

    /// Fused center of each pair. A single-sample `xg1` is paired with every
    /// row of `xg2`.
    pub fn fuse_center(&self, xg1: &Tensor, xg2: &Tensor) -> Result<Tensor> {
        let broadcastable = xg1.shape() == xg2.shape()
            || (xg1.shape().first() == Some(&1) && xg1.shape().get(1..) == xg2.shape().get(1..));
        if !broadcastable {
            return Err(Error::ShapeMismatch {
                op: "fuse_center",
                lhs: xg1.shape().to_vec(),
                rhs: xg2.shape().to_vec(),
            });
        }
        let z = self.project_second(xg2)?.add(&self.project_first(xg1)?)?;
        self.fusion_tail(&z)
    }

    /// Same as [`fuse_center`](Self::fuse_center) but by literal channel
    /// concatenation; kept as a reference for the split form.
    pub fn fuse_center_concat(&self, xg1: &Tensor, xg2: &Tensor) -> Result<Tensor> {
        let (w, b) = &self.fusion[0];
        let z = xg1.concat_channels(xg2)?.conv1x1(w, b)?;
        self.fusion_tail(&z)
    }

    /// `output_scale · (gap(Δ ⊙ sgn) · W + b)`.
    pub fn head_forward(&self, signed: &Tensor) -> Result<Tensor> {
        Ok(signed
            .gap()?
            .affine(&self.head_w, &self.head_b)?
            .mul_scalar(self.output_scale))
    }

    /// Label-difference estimate `f(Δτ(xs, xg) ⊙ sgn(xs, xg))`, one row per pair.
    pub fn predict_delta(&self, xs: &Tensor, xg: &Tensor) -> Result<Tensor> {
        self.check_features("predict_delta", xs)?;
        let stats = xs.spatial_mean_std(self.eps)?;
        self.predict_delta_with_stats(xs, xg, &stats)
    }

    fn predict_delta_with_stats(&self, xs: &Tensor, xg: &Tensor, stats: &FeatureStats) -> Result<Tensor> {
        let delta = delta_tau_with_stats(xs, xg, stats, self.dist)?;
        let sign = sign_map_with_stats(xg, stats, self.dist)?;
        self.head_forward(&delta.mul(&sign)?)
    }
}

/// `+1` where the CDF of `xg`, standardized with `xs`'s statistics, is at
/// most 0.5 and `-1` elsewhere. The result is a constant.
pub fn sign_map(xs: &Tensor, xg: &Tensor, dist: TriangularDist, eps: f64) -> Result<Tensor> {
    if xs.shape() != xg.shape() {
        return Err(Error::ShapeMismatch {
            op: "sign_map",
            lhs: xs.shape().to_vec(),
            rhs: xg.shape().to_vec(),
        });
    }
    let stats = xs.spatial_mean_std(eps)?;
    sign_map_with_stats(xg, &stats, dist)
}

pub fn sign_map_with_stats(xg: &Tensor, stats: &FeatureStats, dist: TriangularDist) -> Result<Tensor> {
    let s = standardize(&xg.detach(), &stats.detach())?;
    let data = s
        .data()
        .iter()
        .map(|&v| if dist.cdf(v) > 0.5 { -1.0 } else { 1.0 })
        .collect();
    Tensor::new(s.shape(), data)
}

/// Everything the pairwise losses need from one forward pass over
/// `(xg1, xg2)` pairs.
#[derive(Clone, Debug)]
pub struct PairForward {
    pub xs: Tensor,
    /// `xg1` broadcast to the batch.
    pub xg1: Tensor,
    pub xg2: Tensor,
    pub stats: FeatureStats,
    /// `Δτ(xs, xg1)`.
    pub delta1: Tensor,
    /// `Δτ(xs, xg2)`.
    pub delta2: Tensor,
    /// `f(Δτ(xs, xg1) ⊙ sgn(xs, xg1))`, `N×label_dim`.
    pub pred1: Tensor,
    pub pred2: Tensor,
}

pub fn pair_forward(head: &TdtHead, xg1: &Tensor, xg2: &Tensor) -> Result<PairForward> {
    let xs = head.fuse_center(xg1, xg2)?;
    let xg1 = if xg1.shape() == xg2.shape() {
        xg1.clone()
    } else {
        xg1.expand(xg2.shape())?
    };
    let stats = xs.spatial_mean_std(head.eps)?;
    let delta1 = delta_tau_with_stats(&xs, &xg1, &stats, head.dist)?;
    let delta2 = delta_tau_with_stats(&xs, xg2, &stats, head.dist)?;
    let sign1 = sign_map_with_stats(&xg1, &stats, head.dist)?;
    let sign2 = sign_map_with_stats(xg2, &stats, head.dist)?;
    let pred1 = head.head_forward(&delta1.mul(&sign1)?)?;
    let pred2 = head.head_forward(&delta2.mul(&sign2)?)?;
    Ok(PairForward {
        xs,
        xg1,
        xg2: xg2.clone(),
        stats,
        delta1,
        delta2,
        pred1,
        pred2,
    })
}

/// A test feature and the prior features it is compared against.
#[derive(Clone, Debug)]
pub struct PairBatch {
    /// `1×C×h×w`.
    pub x_test: Tensor,
    /// `N×C×h×w`.
    pub x_priors: Tensor,
    /// Row-major `N×label_dim`.
    pub y_priors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Length `label_dim`.
    pub mean: Vec<f64>,
    /// One length-`label_dim` estimate per prior, in prior order.
    pub per_prior: Vec<Vec<f64>>,
}

/// Mean of each column; each column is summed in sorted order so the result
/// does not depend on the row order.
fn order_free_mean(rows: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut col = Vec::with_capacity(rows.len());
    (0..dim)
        .map(|k| {
            col.clear();
            col.extend(rows.iter().map(|r| r[k]));
            col.sort_by(f64::total_cmp);
            col.iter().sum::<f64>() / rows.len() as f64
        })
        .collect()
}

/// Inference against a fixed prior set. The prior half of the first fusion
/// layer is computed once.
#[derive(Clone, Debug)]
pub struct Predictor {
    head: TdtHead,
    prior_proj: Tensor,
    prior_labels: Vec<f64>,
    n_priors: usize,
}

impl Predictor {
    pub fn new(head: TdtHead, x_priors: &Tensor, y_priors: &[f64]) -> Result<Self> {
        let n = x_priors.shape().first().copied().unwrap_or(0);
        if n == 0 {
            return Err(Error::EmptyPriorSet);
        }
        if y_priors.len() != n * head.label_dim() {
            return Err(Error::ShapeMismatch {
                op: "predict_label",
                lhs: vec![y_priors.len()],
                rhs: vec![n, head.label_dim()],
            });
        }
        let prior_proj = head.project_second(&x_priors.detach())?;
        Ok(Predictor {
            head,
            prior_proj,
            prior_labels: y_priors.to_vec(),
            n_priors: n,
        })
    }

    pub fn head(&self) -> &TdtHead {
        &self.head
    }

    pub fn n_priors(&self) -> usize {
        self.n_priors
    }

    /// `ŷ_i = y_i − 2·f(Δτ(Xs_i, x_test) ⊙ sgn)`, averaged over priors.
    pub fn predict(&self, x_test: &Tensor) -> Result<Prediction> {
        let x_test = x_test.detach();
        let shape = self.prior_proj.shape();
        if x_test.shape().first() != Some(&1) || x_test.shape().get(1..) != shape.get(1..) {
            return Err(Error::ShapeMismatch {
                op: "predict_label",
                lhs: x_test.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let z = self.prior_proj.add(&self.head.project_first(&x_test)?)?;
        let xs = self.head.fusion_tail(&z)?;
        let xg = x_test.expand(shape)?;
        let delta = self.head.predict_delta(&xs, &xg)?;
        let dim = self.head.label_dim();
        let per_prior: Vec<Vec<f64>> = delta
            .data()
            .chunks_exact(dim)
            .zip(self.prior_labels.chunks_exact(dim))
            .map(|(d, y)| y.iter().zip(d).map(|(y, d)| y - 2.0 * d).collect())
            .collect();
        Ok(Prediction {
            mean: order_free_mean(&per_prior, dim),
            per_prior,
        })
    }
}

pub fn predict_label(batch: &PairBatch, head: &TdtHead) -> Result<Prediction> {
    Predictor::new(head.clone(), &batch.x_priors, &batch.y_priors)?.predict(&batch.x_test)
}
