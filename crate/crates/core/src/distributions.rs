//! Symmetric triangular density, its CDF, the Gaussian it approximates, and the
//! triangular feature difference built on them.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use crate::tensor::FeatureStats;

/// `sqrt(6)`: the half-width at which the symmetric triangular density has unit
/// variance.
pub const MOMENT_MATCHED_B: f64 = 2.449_489_742_783_178;

/// `sup |phi(s) - tau(s | sqrt 6)|` over `s in [-4, 4]` on a 1e-3 grid,
/// attained near `|s| = 1.662`.
pub const GAUSSIAN_APPROX_BOUND: f64 = 0.030_995_515_546_482_624;

/// Symmetric triangular density on `[-b, b]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangularDist {
    b: f64,
}

impl Default for TriangularDist {
    fn default() -> Self {
        TriangularDist {
            b: MOMENT_MATCHED_B,
        }
    }
}

impl TriangularDist {
    pub fn new(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "triangular half-width must be positive and finite, got {b}"
            )));
        }
        Ok(TriangularDist { b })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn pdf(&self, s: f64) -> f64 {
        let b = self.b;
        if s.abs() <= b {
            (1.0 - s.abs() / b) / b
        } else {
            0.0
        }
    }

    pub fn cdf(&self, s: f64) -> f64 {
        let b = self.b;
        if s <= -b {
            0.0
        } else if s <= 0.0 {
            (s + b) * (s + b) / (2.0 * b * b)
        } else if s < b {
            1.0 - (b - s) * (b - s) / (2.0 * b * b)
        } else {
            1.0
        }
    }

    pub fn variance(&self) -> f64 {
        self.b * self.b / 6.0
    }
}

/// `(x - mu) / sigma` with the statistics broadcast over the spatial axes.
pub fn standardize(x: &Tensor, stats: &FeatureStats) -> Result<Tensor> {
    if let Some(bad) = stats.sigma.data().iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "standard deviation must be positive, got {bad}"
        )));
    }
    x.sub(&stats.mu)?.div(&stats.sigma)
}

/// Elementwise triangular density, `relu(1 - |s|/b) / b`.
pub fn triangular_pdf(s: &Tensor, dist: TriangularDist) -> Tensor {
    let b = dist.b();
    s.abs()
        .div_scalar(b)
        .and_then(|r| r.rsub_scalar(1.0).relu().div_scalar(b))
        .expect("b is positive")
}

/// Elementwise closed-form triangular CDF; not differentiable (constant output).
pub fn triangular_cdf(s: &Tensor, dist: TriangularDist) -> Tensor {
    let data = s.data().iter().map(|&v| dist.cdf(v)).collect();
    Tensor::new(s.shape(), data).expect("same shape")
}

/// Standard normal density.
pub fn gaussian_pdf(s: &Tensor) -> Tensor {
    s.square()
        .mul_scalar(-0.5)
        .exp()
        .mul_scalar(1.0 / (2.0 * PI).sqrt())
}

/// `tau(standardize(x_ref)) - tau(standardize(x_other))`, both standardized
/// with the given statistics of the reference map.
pub fn delta_tau_with_stats(
    x_ref: &Tensor,
    x_other: &Tensor,
    stats: &FeatureStats,
    dist: TriangularDist,
) -> Result<Tensor> {
    if x_ref.shape() != x_other.shape() {
        return Err(Error::ShapeMismatch {
            op: "delta_tau",
            lhs: x_ref.shape().to_vec(),
            rhs: x_other.shape().to_vec(),
        });
    }
    let s_ref = standardize(x_ref, stats)?;
    let s_other = standardize(x_other, stats)?;
    triangular_pdf(&s_ref, dist).sub(&triangular_pdf(&s_other, dist))
}

/// Triangular feature difference of `x_other` relative to `x_ref`; statistics
/// always come from the first (reference) argument.
pub fn delta_tau(x_ref: &Tensor, x_other: &Tensor, dist: TriangularDist, eps: f64) -> Result<Tensor> {
    if x_ref.shape() != x_other.shape() {
        return Err(Error::ShapeMismatch {
            op: "delta_tau",
            lhs: x_ref.shape().to_vec(),
            rhs: x_other.shape().to_vec(),
        });
    }
    let stats = x_ref.spatial_mean_std(eps)?;
    delta_tau_with_stats(x_ref, x_other, &stats, dist)
}
