//! Regression and angular error summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thresholds reported as cumulative accuracy.
pub const CA_THRESHOLDS: [u32; 3] = [3, 5, 7];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularStats {
    pub mean: f64,
    pub median: f64,
    pub trimean: f64,
    pub best25: f64,
    pub worst25: f64,
    pub pct95: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean per-sample Euclidean error (absolute error for scalar labels).
    pub mae: f64,
    /// Mean squared error over all label components.
    pub mse: f64,
    /// Percentage of samples with error strictly below `n`.
    pub ca: BTreeMap<u32, f64>,
    pub angular: Option<AngularStats>,
    /// Pearson correlation of predicted vs true label differences over all
    /// (test, prior) pairs; scalar labels only.
    pub pair_pearson: Option<f64>,
}

/// Linear-interpolation quantile of sorted data, position `(n-1)·q`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn angular_stats(errors: &[f64]) -> Result<AngularStats> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("angular stats of an empty list".into()));
    }
    if let Some(bad) = errors.iter().find(|e| !e.is_finite()) {
        return Err(Error::NonFinite(format!("angular error {bad}")));
    }
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = quantile(&s, 0.5);
    let quarter = (n / 4).max(1);
    Ok(AngularStats {
        mean: mean(&s),
        median,
        trimean: (quantile(&s, 0.25) + 2.0 * median + quantile(&s, 0.75)) / 4.0,
        best25: mean(&s[..quarter]),
        worst25: mean(&s[(3 * n / 4).min(n - 1)..]),
        pct95: quantile(&s, 0.95),
    })
}

pub fn cumulative_accuracy(errors: &[f64], n: f64) -> f64 {
    let hits = errors.iter().filter(|&&e| e < n).count();
    100.0 * hits as f64 / errors.len() as f64
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn angle_deg(p: &[f64], q: &[f64]) -> f64 {
    let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    let np = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nq = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    (dot / (np * nq)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Metrics for row-major predictions and targets of width `label_dim`.
pub fn regression_metrics(pred: &[f64], truth: &[f64], label_dim: usize) -> Result<Metrics> {
    if pred.len() != truth.len() || pred.is_empty() || label_dim == 0 || !pred.len().is_multiple_of(label_dim) {
        return Err(Error::InvalidShape {
            op: "metrics",
            msg: format!("{} predictions vs {} targets (width {label_dim})", pred.len(), truth.len()),
        });
    }
    let errors: Vec<f64> = pred
        .chunks_exact(label_dim)
        .zip(truth.chunks_exact(label_dim))
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect();
    let mse = pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64;
    let ca = CA_THRESHOLDS
        .iter()
        .map(|&n| (n, cumulative_accuracy(&errors, n as f64)))
        .collect();
    let angular = if label_dim == 3 {
        let angles: Vec<f64> = pred
            .chunks_exact(3)
            .zip(truth.chunks_exact(3))
            .map(|(p, t)| angle_deg(p, t))
            .collect();
        Some(angular_stats(&angles)?)
    } else {
        None
    };
    Ok(Metrics {
        mae: mean(&errors),
        mse,
        ca,
        angular,
        pair_pearson: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ca_and_mae_example() {
        let m = regression_metrics(&[1.0, 2.0, 4.0, 8.0], &[0.0; 4], 1).unwrap();
        assert_eq!(m.ca[&3], 50.0);
        assert_eq!(m.ca[&5], 75.0);
        assert_eq!(m.mae, 3.75);
    }

    #[test]
    fn perfect_predictions() {
        let y = [0.3, 0.5, 0.2, 0.1, 0.1, 0.8];
        let m = regression_metrics(&y, &y, 3).unwrap();
        assert_eq!(m.mae, 0.0);
        assert!(m.ca.values().all(|&c| c == 100.0));
        assert_eq!(m.angular.unwrap().mean, 0.0);
    }

    #[test]
    fn quartile_convention() {
        let s = angular_stats(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.median, s.trimean), (2.5, 2.5, 2.5));
        assert_eq!((s.best25, s.worst25), (1.0, 4.0));
        assert!((s.pct95 - 3.85).abs() < 1e-12);
    }

    #[test]
    fn pearson_of_affine_is_one() {
        let a = [1.0, 2.0, 5.0, -1.0];
        let b: Vec<f64> = a.iter().map(|v| 3.0 * v - 2.0).collect();
        assert!((pearson(&a, &b) - 1.0).abs() < 1e-12);
    }
}
