use super::metrics::{pearson, regression_metrics, Metrics};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::TdtModel;
use crate::prior::PriorSet;
use crate::tdt::Prediction;

/// Prediction for every row of `dataset` against `priors`.
pub fn predict_dataset(model: &TdtModel, priors: &PriorSet, dataset: &Dataset) -> Result<Vec<Prediction>> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty dataset".into()));
    }
    let predictor = priors.predictor(model)?;
    let feats = model.features(&dataset.inputs)?.detach();
    (0..dataset.len())
        .map(|i| predictor.predict(&feats.narrow(0, i, 1)?))
        .collect()
}

pub fn evaluate(model: &TdtModel, priors: &PriorSet, dataset: &Dataset) -> Result<Metrics> {
    let preds = predict_dataset(model, priors, dataset)?;
    metrics_for(&preds, priors, dataset)
}

pub fn metrics_for(preds: &[Prediction], priors: &PriorSet, dataset: &Dataset) -> Result<Metrics> {
    let flat: Vec<f64> = preds.iter().flat_map(|p| p.mean.iter().copied()).collect();
    let mut m = regression_metrics(&flat, &dataset.labels, dataset.label_dim)?;
    if dataset.label_dim == 1 {
        let mut predicted = Vec::new();
        let mut actual = Vec::new();
        for (i, p) in preds.iter().enumerate() {
            let y = dataset.labels[i];
            for (j, est) in p.per_prior.iter().enumerate() {
                let y_prior = priors.samples.labels[j];
                predicted.push(y_prior - est[0]);
                actual.push(y_prior - y);
            }
        }
        m.pair_pearson = Some(pearson(&predicted, &actual));
    }
    Ok(m)
}
