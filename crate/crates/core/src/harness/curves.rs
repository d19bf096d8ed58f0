//! Discrepancy curves and symmetric-center decoding on probe label pairs.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::synth::SynthGenerator;
use crate::distributions::delta_tau;
use crate::error::{Error, Result};
use crate::losses::loss_symmetry;
use crate::model::TdtModel;
use crate::prior::PriorSet;
use crate::tdt::pair_forward;

/// Label pairs `(a, b)` to probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub pairs: Vec<(f64, f64)>,
}

impl ProbeGrid {
    /// `(anchor, b)` for `steps + 1` values of `b` evenly spaced over `[lo, hi]`.
    pub fn gap_sweep(anchor: f64, lo: f64, hi: f64, steps: usize) -> Self {
        let h = (hi - lo) / steps.max(1) as f64;
        ProbeGrid {
            pairs: (0..=steps).map(|i| (anchor, lo + h * i as f64)).collect(),
        }
    }

    /// `(m − d, m + d)` for each midpoint and `count` half-gaps evenly spaced
    /// over `(0, max_half_gap]`.
    pub fn symmetric(midpoints: &[f64], max_half_gap: f64, count: usize) -> Self {
        let mut pairs = Vec::with_capacity(midpoints.len() * count);
        for &m in midpoints {
            for k in 1..=count {
                let d = max_half_gap * k as f64 / count as f64;
                pairs.push((m - d, m + d));
            }
        }
        ProbeGrid { pairs }
    }

    pub fn concat(mut self, other: ProbeGrid) -> Self {
        self.pairs.extend(other.pairs);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub a: f64,
    pub b: f64,
    /// `(a + b) / 2`, the symmetric label.
    pub midpoint: f64,
    /// Mean of `|Δτ(x_a, x_b)|` over channels and pixels.
    pub discrepancy: f64,
    /// Predicted `b − a`, i.e. `2·f(Δτ(x_s, x_a) ⊙ sgn)`.
    pub predicted_delta: f64,
    pub symmetry_loss: f64,
    /// The fused center decoded against the priors.
    pub decoded_center: f64,
}

pub const CURVES_HEADER: &str = "a,b,midpoint,discrepancy,predicted_delta,symmetry_loss,decoded_center";

/// One row per probe pair, using noise-free generator inputs.
pub fn export_curves(
    model: &TdtModel,
    priors: &PriorSet,
    generator: &SynthGenerator,
    grid: &ProbeGrid,
) -> Result<Vec<CurveRow>> {
    if model.spec.label_dim != 1 {
        return Err(Error::InvalidArgument("curve export needs scalar labels".into()));
    }
    let head = model.head()?;
    let predictor = priors.predictor(model)?;
    let dist = head.dist();
    let mut rows = Vec::with_capacity(grid.pairs.len());
    for &(a, b) in &grid.pairs {
        let mut input = generator.clean(&[a]);
        input.extend(generator.clean(&[b]));
        let feats = model.features(&input)?.detach();
        let xa = feats.narrow(0, 0, 1)?;
        let xb = feats.narrow(0, 1, 1)?;
        let fwd = pair_forward(&head, &xa, &xb)?;
        let disc = delta_tau(&xa, &xb, dist, head.eps())?.abs().mean()?.item()?;
        rows.push(CurveRow {
            a,
            b,
            midpoint: 0.5 * (a + b),
            discrepancy: disc,
            predicted_delta: 2.0 * fwd.pred1.item()?,
            symmetry_loss: loss_symmetry(&fwd.delta1, &fwd.delta2)?.item()?,
            decoded_center: predictor.predict(&fwd.xs)?.mean[0],
        });
    }
    Ok(rows)
}

pub fn write_curves_csv<W: Write>(out: &mut W, rows: &[CurveRow]) -> Result<()> {
    writeln!(out, "{CURVES_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e}",
            r.a, r.b, r.midpoint, r.discrepancy, r.predicted_delta, r.symmetry_loss, r.decoded_center
        )?;
    }
    Ok(())
}

/// Least-squares fit of `c + k·|x − apex|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangularFit {
    pub apex: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Scans the apex over 401 candidates spanning the x range and solves the
/// remaining two coefficients in closed form.
pub fn triangular_fit(x: &[f64], y: &[f64]) -> Result<TriangularFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidArgument("triangular fit needs >= 3 matched points".into()));
    }
    let n = x.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let mut best: Option<TriangularFit> = None;
    for i in 0..=400 {
        let apex = lo + (hi - lo) * i as f64 / 400.0;
        let u: Vec<f64> = x.iter().map(|v| (v - apex).abs()).collect();
        let mu = u.iter().sum::<f64>() / n;
        let suu: f64 = u.iter().map(|v| (v - mu) * (v - mu)).sum();
        let suy: f64 = u.iter().zip(y).map(|(a, b)| (a - mu) * (b - my)).sum();
        let slope = if suu > 0.0 { suy / suu } else { 0.0 };
        let intercept = my - slope * mu;
        let ss_res: f64 = u
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        if best.is_none_or(|b| r2 > b.r2) {
            best = Some(TriangularFit {
                apex,
                slope,
                intercept,
                r2,
            });
        }
    }
    Ok(best.expect("at least one candidate"))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymmetryBucket {
    pub midpoint: f64,
    pub count: usize,
    pub mean_decoded: f64,
    /// `|mean_decoded − midpoint|`.
    pub error: f64,
}

/// Groups rows by midpoint (bucketed to `width`) and averages the decoded
/// center of each bucket.
pub fn symmetry_axis_summary(rows: &[CurveRow], width: f64) -> Vec<SymmetryBucket> {
    let mut groups: BTreeMap<i64, (f64, f64, usize)> = BTreeMap::new();
    for r in rows {
        let g = groups.entry((r.midpoint / width).round() as i64).or_default();
        g.0 += r.midpoint;
        g.1 += r.decoded_center;
        g.2 += 1;
    }
    groups
        .values()
        .map(|&(m, d, c)| {
            let (m, d) = (m / c as f64, d / c as f64);
            SymmetryBucket {
                midpoint: m,
                count: c,
                mean_decoded: d,
                error: (d - m).abs(),
            }
        })
        .collect()
}

/// `(b − a, discrepancy)` of each row, for the triangular fit.
pub fn discrepancy_curve(rows: &[CurveRow]) -> (Vec<f64>, Vec<f64>) {
    rows.iter().map(|r| (r.b - r.a, r.discrepancy)).unzip()
}
