//! Symmetry, commutativity and pair-supervised losses, plus the angular error.

use serde::{Deserialize, Serialize};

use crate::distributions::{delta_tau, TriangularDist};
use crate::error::{Error, Result};
use crate::tdt::{pair_forward, TdtHead};
use crate::tensor::Tensor;

pub const SMOOTH_L1_BETA: f64 = 1.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_s: f64,
    pub l_m: f64,
    pub l_p: f64,
    pub l_t: f64,
    /// Degrees; only for three-dimensional labels.
    pub l_angular: Option<f64>,
}

/// Which terms enter the training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossSwitches {
    pub symmetry: bool,
    pub commutativity: bool,
    pub pair: bool,
    pub angular: bool,
}

impl Default for LossSwitches {
    fn default() -> Self {
        LossSwitches {
            symmetry: true,
            commutativity: true,
            pair: true,
            angular: false,
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean over pairs of `‖d1 − d2‖₂`, each pair flattened.
pub fn loss_symmetry(d1: &Tensor, d2: &Tensor) -> Result<Tensor> {
    same_shape("loss_symmetry", d1, d2)?;
    d1.sub(d2)?.row_norm()?.mean()
}

/// Mean over pairs of `‖Δτ(xg1, xg2) − Δτ(xg2, xg1)‖₂`.
pub fn loss_commutativity(xg1: &Tensor, xg2: &Tensor, dist: TriangularDist, eps: f64) -> Result<Tensor> {
    same_shape("loss_commutativity", xg1, xg2)?;
    let forward = delta_tau(xg1, xg2, dist, eps)?;
    let backward = delta_tau(xg2, xg1, dist, eps)?;
    loss_symmetry(&forward, &backward)
}

pub fn smooth_l1(x: &Tensor, beta: f64) -> Result<Tensor> {
    x.smooth_l1(beta)
}

/// `N×label_dim` label tensor from a flat slice; a single row broadcasts.
fn label_tensor(y: &[f64], label_dim: usize) -> Result<Tensor> {
    if y.is_empty() || !y.len().is_multiple_of(label_dim) {
        return Err(Error::InvalidShape {
            op: "labels",
            msg: format!("{} values for label_dim {label_dim}", y.len()),
        });
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("label {bad}")));
    }
    Tensor::new(&[y.len() / label_dim, label_dim], y.to_vec())
}

/// Label difference `y2 − y1` as an `N×label_dim` tensor.
pub fn label_delta(y1: &[f64], y2: &[f64], label_dim: usize) -> Result<Tensor> {
    label_tensor(y2, label_dim)?.sub(&label_tensor(y1, label_dim)?)
}

/// Both comparative terms from precomputed head outputs `pred1`, `pred2`
/// (`N×label_dim`): summed over the label axis, averaged over pairs.
pub fn pair_supervised_terms(pred1: &Tensor, pred2: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor)> {
    same_shape("loss_pair_supervised", pred1, pred2)?;
    let dy = if dy.shape() == pred1.shape() {
        dy.clone()
    } else {
        dy.expand(pred1.shape())?
    };
    let n = pred1.shape()[0] as f64;
    let first = smooth_l1(&dy.sub(&pred1.mul_scalar(2.0))?, SMOOTH_L1_BETA)?.sum().mul_scalar(1.0 / n);
    let second = smooth_l1(&dy.add(&pred2.mul_scalar(2.0))?, SMOOTH_L1_BETA)?.sum().mul_scalar(1.0 / n);
    Ok((first, second))
}

pub fn loss_pair_supervised(
    xs: &Tensor,
    xg1: &Tensor,
    xg2: &Tensor,
    y1: &[f64],
    y2: &[f64],
    head: &TdtHead,
) -> Result<Tensor> {
    let dy = label_delta(y1, y2, head.label_dim())?;
    let p1 = head.predict_delta(xs, xg1)?;
    let p2 = head.predict_delta(xs, xg2)?;
    let (a, b) = pair_supervised_terms(&p1, &p2, &dy)?;
    a.add(&b)
}

/// Angle in degrees between label vectors, averaged over rows. Accepts a
/// single vector or an `N×k` batch.
pub fn loss_angular(p: &Tensor, p_star: &Tensor) -> Result<Tensor> {
    same_shape("loss_angular", p, p_star)?;
    let (p, q) = match p.rank() {
        1 => {
            let k = p.numel();
            (p.reshape(&[1, k])?, p_star.reshape(&[1, k])?)
        }
        2 => (p.clone(), p_star.clone()),
        _ => {
            return Err(Error::InvalidShape {
                op: "loss_angular",
                msg: format!("expected a vector or N×k batch, got {:?}", p.shape()),
            })
        }
    };
    let n = p.shape()[0];
    let unit = |v: &Tensor| -> Result<Tensor> {
        let norm = v.row_norm()?;
        if norm.data().iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidArgument("angular loss of a zero-norm vector".into()));
        }
        v.div(&norm.reshape(&[n, 1])?)
    };
    let cos = unit(&p)?.mul(&unit(&q)?)?.sum_axes(&[1])?;
    cos.clamp(-1.0, 1.0)?
        .acos()
        .mul_scalar(180.0 / std::f64::consts::PI)
        .mean()
}

/// Sum of the enabled components; disabled ones are reported as zero.
pub fn loss_total(l_s: Option<&Tensor>, l_m: Option<&Tensor>, l_p: Option<&Tensor>) -> Result<(Tensor, LossReport)> {
    let mut total = Tensor::scalar(0.0);
    let mut values = [0.0; 3];
    for (slot, part) in values.iter_mut().zip([l_s, l_m, l_p]) {
        if let Some(t) = part {
            *slot = t.item()?;
            total = total.add(t)?;
        }
    }
    let report = LossReport {
        l_s: values[0],
        l_m: values[1],
        l_p: values[2],
        l_t: total.item()?,
        l_angular: None,
    };
    Ok((total, report))
}

/// The training objective for one test-vs-priors batch: `xg1` is `1×C×h×w`
/// (or already batched), `xg2` is `N×C×h×w`, `y1`/`y2` are flat label rows.
/// Returns the differentiable objective and its report.
pub fn tdt_losses(
    head: &TdtHead,
    xg1: &Tensor,
    xg2: &Tensor,
    y1: &[f64],
    y2: &[f64],
    switches: LossSwitches,
) -> Result<(Tensor, LossReport)> {
    let fwd = pair_forward(head, xg1, xg2)?;
    let l_s = switches
        .symmetry
        .then(|| loss_symmetry(&fwd.delta1, &fwd.delta2))
        .transpose()?;
    let l_m = switches
        .commutativity
        .then(|| loss_commutativity(&fwd.xg1, &fwd.xg2, head.dist(), head.eps()))
        .transpose()?;
    let l_p = if switches.pair {
        let dy = label_delta(y1, y2, head.label_dim())?;
        let (a, b) = pair_supervised_terms(&fwd.pred1, &fwd.pred2, &dy)?;
        Some(a.add(&b)?)
    } else {
        None
    };
    let (mut total, mut report) = loss_total(l_s.as_ref(), l_m.as_ref(), l_p.as_ref())?;
    if switches.angular {
        // Angle between each per-prior estimate of y1 and the truth.
        let y1 = label_tensor(y1, head.label_dim())?;
        let y2 = label_tensor(y2, head.label_dim())?;
        let est = y2.sub(&fwd.pred1.mul_scalar(2.0))?;
        let truth = y1.expand(est.shape())?;
        let ang = loss_angular(&est, &truth)?;
        report.l_angular = Some(ang.item()?);
        total = total.add(&ang)?;
    }
    Ok((total, report))
}
