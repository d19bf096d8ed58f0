//! The training loop: each step pairs one training sample with a random
//! batch of priors and minimizes the enabled TDT losses.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::evaluate::evaluate;
use super::metrics::Metrics;
use super::optim::{adam_step, cosine_lr, AdamState, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{tdt_losses, LossReport};
use crate::model::TdtModel;
use crate::prior::PriorSet;
use crate::rng;
use crate::tensor::Tensor;

const STREAM_EPOCH_ORDER: u64 = 1;
const STREAM_PRIOR_BATCH: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Steps that produced an update.
    pub steps: usize,
    /// Component means over the epoch's steps.
    pub loss: LossReport,
    pub lr_end: f64,
    pub metrics: Option<Metrics>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TdtModel,
    pub history: Vec<EpochRecord>,
    /// `L_T` of every update, in order.
    pub step_losses: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOptions<'a> {
    /// Per-sample flag; unlabeled samples contribute only `L_S` and `L_M`.
    pub labeled: Option<&'a [bool]>,
    /// Evaluated after every epoch when present.
    pub validation: Option<&'a Dataset>,
}

fn check_shapes(dataset: &Dataset, priors: &PriorSet, model: &TdtModel, labeled: Option<&[bool]>) -> Result<()> {
    let spec = &model.spec;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if priors.is_empty() {
        return Err(Error::EmptyPriorSet);
    }
    for (what, d) in [("training set", dataset), ("prior set", &priors.samples)] {
        if d.input_dim != spec.input_dim || d.label_dim != spec.label_dim {
            return Err(Error::InvalidShape {
                op: "train",
                msg: format!(
                    "{what} is {}→{}, model expects {}→{}",
                    d.input_dim, d.label_dim, spec.input_dim, spec.label_dim
                ),
            });
        }
    }
    if let Some(mask) = labeled {
        if mask.len() != dataset.len() {
            return Err(Error::InvalidShape {
                op: "train",
                msg: format!("labeled mask has {} entries for {} samples", mask.len(), dataset.len()),
            });
        }
    }
    Ok(())
}

pub fn train(
    dataset: &Dataset,
    priors: &PriorSet,
    mut model: TdtModel,
    config: &TrainConfig,
    options: TrainOptions<'_>,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_shapes(dataset, priors, &model, options.labeled)?;
    let n = dataset.len();
    let p = config.batch_pairs.min(priors.len());
    let total_steps = config.epochs * n;
    let mut order_rng = rng::derived(config.seed, STREAM_EPOCH_ORDER);
    let mut batch_rng = rng::derived(config.seed, STREAM_PRIOR_BATCH);
    let mut prior_idx: Vec<usize> = (0..priors.len()).collect();
    let mut adam = AdamState::default();
    let mut history = Vec::with_capacity(config.epochs);
    let mut step_losses = Vec::with_capacity(total_steps);
    let d_in = dataset.input_dim;
    let label_dim = dataset.label_dim;
    let mut step = 0;
    let mut lr = config.lr;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        rng::shuffle_prefix(&mut order_rng, &mut order, n);
        let mut sums = LossReport::default();
        let mut angular_sum = 0.0;
        let mut updates = 0;
        for &i in &order {
            rng::shuffle_prefix(&mut batch_rng, &mut prior_idx, p);
            let batch = &prior_idx[..p];
            lr = cosine_lr(step, total_steps, config.lr);
            step += 1;

            let mut switches = config.switches();
            if !options.labeled.is_none_or(|m| m[i]) {
                switches.pair = false;
                switches.angular = false;
            }
            if !(switches.symmetry || switches.commutativity || switches.pair) {
                continue;
            }

            let mut inputs = Vec::with_capacity((p + 1) * d_in);
            inputs.extend_from_slice(dataset.input(i));
            let mut y2 = Vec::with_capacity(p * label_dim);
            for &j in batch {
                inputs.extend_from_slice(priors.samples.input(j));
                y2.extend_from_slice(priors.samples.label(j));
            }
            let feats = model.backbone_forward(&Tensor::new(&[p + 1, d_in], inputs)?)?;
            let xg1 = feats.narrow(0, 0, 1)?;
            let xg2 = feats.narrow(0, 1, p)?;
            let head = model.head()?;
            let (loss, report) = tdt_losses(&head, &xg1, &xg2, dataset.label(i), &y2, switches)?;
            if !report.l_t.is_finite() {
                return Err(Error::Divergence {
                    step,
                    msg: format!("loss is {} (L_S {}, L_M {}, L_P {})", report.l_t, report.l_s, report.l_m, report.l_p),
                });
            }
            model.params.backward(&loss)?;
            adam_step(&mut model.params, &mut adam, config, lr)?;

            step_losses.push(report.l_t);
            sums.l_s += report.l_s;
            sums.l_m += report.l_m;
            sums.l_p += report.l_p;
            sums.l_t += report.l_t;
            angular_sum += report.l_angular.unwrap_or(0.0);
            updates += 1;
        }
        let k = updates.max(1) as f64;
        let loss = LossReport {
            l_s: sums.l_s / k,
            l_m: sums.l_m / k,
            l_p: sums.l_p / k,
            l_t: sums.l_t / k,
            l_angular: config.use_angular.then_some(angular_sum / k),
        };
        let metrics = match options.validation {
            Some(v) => Some(evaluate(&model, priors, v)?),
            None => None,
        };
        history.push(EpochRecord {
            epoch: epoch + 1,
            steps: updates,
            loss,
            lr_end: lr,
            metrics,
        });
    }
    model.params.clear_grads();
    Ok(TrainOutcome {
        model,
        history,
        step_losses,
    })
}

pub const HISTORY_HEADER: &str = "epoch,steps,l_s,l_m,l_p,l_t,l_angular,lr_end,mae,mse,ca3,ca5,ca7";

/// One comma-separated row per epoch, after a header row.
pub fn write_history_csv<W: Write>(out: &mut W, history: &[EpochRecord]) -> Result<()> {
    writeln!(out, "{HISTORY_HEADER}")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
    for r in history {
        let m = r.metrics.as_ref();
        writeln!(
            out,
            "{},{},{:.10e},{:.10e},{:.10e},{:.10e},{},{:.10e},{},{},{},{},{}",
            r.epoch,
            r.steps,
            r.loss.l_s,
            r.loss.l_m,
            r.loss.l_p,
            r.loss.l_t,
            opt(r.loss.l_angular),
            r.lr_end,
            opt(m.map(|m| m.mae)),
            opt(m.map(|m| m.mse)),
            opt(m.and_then(|m| m.ca.get(&3).copied())),
            opt(m.and_then(|m| m.ca.get(&5).copied())),
            opt(m.and_then(|m| m.ca.get(&7).copied())),
        )?;
    }
    Ok(())
}
