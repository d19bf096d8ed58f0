//! Adam with L2-coupled weight decay and a cosine learning-rate schedule.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossSwitches;
use crate::tensor::ParamStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    /// Priors paired with each training sample per step.
    pub batch_pairs: usize,
    pub use_ls: bool,
    pub use_lm: bool,
    pub use_lp: bool,
    #[serde(default)]
    pub use_angular: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            weight_decay: 0.0005,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 1,
            batch_pairs: 32,
            use_ls: true,
            use_lm: true,
            use_lp: true,
            use_angular: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn switches(&self) -> LossSwitches {
        LossSwitches {
            symmetry: self.use_ls,
            commutativity: self.use_lm,
            pair: self.use_lp,
            angular: self.use_angular,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("train.lr", self.lr), ("train.adam_eps", self.adam_eps)];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("train.weight_decay", "must be >= 0"));
        }
        for (field, v) in [("train.beta1", self.beta1), ("train.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(field, format!("must be in [0, 1), got {v}")));
            }
        }
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if self.batch_pairs == 0 {
            return Err(Error::config("train.batch_pairs", "must be at least 1"));
        }
        if !(self.use_ls || self.use_lm || self.use_lp) {
            return Err(Error::config("train.use_lp", "at least one of use_ls, use_lm, use_lp must be enabled"));
        }
        Ok(())
    }
}

/// `0.5·lr0·(1 + cos(π·step/total))`, held at 0 past the end.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> f64 {
    if total_steps == 0 || step >= total_steps {
        return 0.0;
    }
    0.5 * lr0 * (1.0 + (PI * step as f64 / total_steps as f64).cos())
}

#[derive(Clone, Debug, Default)]
pub struct AdamState {
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
    pub step: usize,
}

/// One Adam update of every trainable parameter holding a gradient.
/// `lr` is the scheduled rate for this step.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState, config: &TrainConfig, lr: f64) -> Result<()> {
    for (name, entry) in params.iter() {
        if let Some(g) = &entry.grad {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step: state.step + 1,
                    msg: format!("non-finite gradient for `{name}`"),
                });
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let moments = &mut state.moments;
    params.update_trainable(|name, theta, grad| {
        let (m, v) = moments
            .entry(name.to_string())
            .or_insert_with(|| (vec![0.0; theta.len()], vec![0.0; theta.len()]));
        Ok(theta
            .iter()
            .zip(grad)
            .zip(m.iter_mut().zip(v.iter_mut()))
            .map(|((&p, &g), (m, v))| {
                let g = g + config.weight_decay * p;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                p - lr * (*m / c1) / ((*v / c2).sqrt() + config.adam_eps)
            })
            .collect())
    })
}
