//! Central finite-difference verification of analytic gradients.

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};
use crate::rng;

/// Central-difference step.
pub const STEP: f64 = 1e-5;
/// Entries where both analytic and numeric gradients are below this are not
/// scored.
pub const GRAD_FLOOR: f64 = 1e-6;
/// Maximum accepted relative error.
pub const REL_TOL: f64 = 1e-4;
/// Random instances closer than this to a kink are rejected by callers.
pub const KINK_EXCLUSION: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
    pub skipped: usize,
    /// Distance of the evaluation point from the nearest kink of any op.
    pub kink_margin: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < REL_TOL && self.max_rel_err.is_finite()
    }
}

/// Compares the analytic gradient of `f` (which must return a single-element
/// tensor) against central differences for every element of every input.
pub fn gradcheck<F>(name: &str, inputs: &[Tensor], f: F) -> Result<GradcheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let vars: Vec<Tensor> = inputs.iter().map(|t| t.detach().into_var()).collect();
    let loss = f(&vars)?;
    let kink_margin = loss.kink_margin();
    let grads = loss.backward()?;
    let consts: Vec<Tensor> = inputs.iter().map(Tensor::detach).collect();

    let mut report = GradcheckReport {
        name: name.to_string(),
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        checked: 0,
        skipped: 0,
        kink_margin,
    };
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(var);
        for (i, &a) in analytic.iter().enumerate() {
            let eval = |delta: f64| -> Result<f64> {
                let mut shifted = consts.clone();
                let mut values = consts[k].to_vec();
                values[i] += delta;
                shifted[k] = Tensor::new(consts[k].shape(), values)?;
                f(&shifted)?.item()
            };
            let numeric = (eval(STEP)? - eval(-STEP)?) / (2.0 * STEP);
            if !numeric.is_finite() {
                return Err(Error::NonFinite(format!("{name}: numeric gradient")));
            }
            let abs_err = (a - numeric).abs();
            report.max_abs_err = report.max_abs_err.max(abs_err);
            let scale = a.abs().max(numeric.abs());
            if scale > GRAD_FLOOR {
                report.max_rel_err = report.max_rel_err.max(abs_err / scale);
                report.checked += 1;
            } else {
                report.skipped += 1;
            }
        }
    }
    Ok(report)
}

/// Scalar projection `sum(out ⊙ r)` with fixed pseudo-random weights `r`, used
/// to gradcheck ops with non-scalar outputs.
pub fn project(out: &Tensor, seed: u64) -> Result<Tensor> {
    let mut rng = rng::seeded(seed);
    let weights: Vec<f64> = (0..out.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Ok(out.mul(&Tensor::new(out.shape(), weights)?)?.sum())
}
