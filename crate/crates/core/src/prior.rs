//! Prior-set selection and cached prior features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::TdtModel;
use crate::rng;
use crate::tdt::Predictor;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Selection {
    Random { n: usize, seed: u64 },
    Stratified { bin_width: f64, per_bin: usize, seed: u64 },
}

/// Backbone features of the priors, tagged with the backbone they came from.
#[derive(Clone, Debug)]
pub struct FeatureCache {
    pub features: Tensor,
    pub stamp: u64,
}

#[derive(Clone, Debug)]
pub struct PriorSet {
    pub samples: Dataset,
    /// Rows of the source dataset, in prior order.
    pub indices: Vec<usize>,
    pub selection: Selection,
    pub cache: Option<FeatureCache>,
}

impl PriorSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_cached(&self) -> bool {
        self.cache.is_some()
    }

    /// Prior features for `model`: the cache when present (and current),
    /// otherwise a fresh backbone pass.
    pub fn features(&self, model: &TdtModel) -> Result<Tensor> {
        if self.is_empty() {
            return Err(Error::EmptyPriorSet);
        }
        match &self.cache {
            Some(cache) => {
                let current = model.backbone_stamp();
                if cache.stamp != current {
                    return Err(Error::StalePriorCache {
                        cached: cache.stamp,
                        current,
                    });
                }
                Ok(cache.features.clone())
            }
            None => Ok(model.features(&self.samples.inputs)?.detach()),
        }
    }

    pub fn predictor(&self, model: &TdtModel) -> Result<Predictor> {
        Predictor::new(model.head()?, &self.features(model)?, &self.samples.labels)
    }
}

fn build(dataset: &Dataset, indices: Vec<usize>, selection: Selection) -> PriorSet {
    PriorSet {
        samples: dataset.subset(&indices),
        indices,
        selection,
        cache: None,
    }
}

/// `n` distinct rows drawn uniformly without replacement.
pub fn select_random(dataset: &Dataset, n: usize, seed: u64) -> Result<PriorSet> {
    if n > dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot select {n} priors from {} samples",
            dataset.len()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyPriorSet);
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    rng::shuffle_prefix(&mut rng::seeded(seed), &mut idx, n);
    idx.truncate(n);
    Ok(build(dataset, idx, Selection::Random { n, seed }))
}

/// Up to `per_bin` rows from each half-open bin `[k·w, (k+1)·w)` of the
/// first label component, bins in ascending order.
pub fn select_stratified(dataset: &Dataset, bin_width: f64, per_bin: usize, seed: u64) -> Result<PriorSet> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidArgument(format!("bin_width must be positive, got {bin_width}")));
    }
    let mut bins: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for i in 0..dataset.len() {
        let key = dataset.label(i)[0];
        if !key.is_finite() {
            return Err(Error::NonFinite(format!("label of sample {i}")));
        }
        bins.entry((key / bin_width).floor() as i64).or_default().push(i);
    }
    let mut r = rng::seeded(seed);
    let mut idx = Vec::new();
    for members in bins.values_mut() {
        let take = per_bin.min(members.len());
        rng::shuffle_prefix(&mut r, members, take);
        idx.extend_from_slice(&members[..take]);
    }
    Ok(build(
        dataset,
        idx,
        Selection::Stratified {
            bin_width,
            per_bin,
            seed,
        },
    ))
}

/// Computes prior features once and stamps them with the current backbone.
pub fn cache_prior_features(model: &TdtModel, priors: &PriorSet) -> Result<PriorSet> {
    let uncached = PriorSet {
        cache: None,
        ..priors.clone()
    };
    let features = uncached.features(model)?;
    Ok(PriorSet {
        cache: Some(FeatureCache {
            features,
            stamp: model.backbone_stamp(),
        }),
        ..uncached
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::distributions::MOMENT_MATCHED_B;
    use crate::model::ModelSpec;

    fn labelled(labels: Vec<f64>) -> Dataset {
        let inputs = (0..labels.len()).map(|i| i as f64).collect();
        Dataset::new(1, 1, inputs, labels).unwrap()
    }

    #[test]
    fn random_whole_set_and_determinism() {
        let d = labelled((0..10).map(f64::from).collect());
        let p = select_random(&d, 10, 3).unwrap();
        let set: BTreeSet<_> = p.indices.iter().copied().collect();
        assert_eq!(set.len(), 10);
        assert_ne!(p.indices, (0..10).collect::<Vec<_>>());
        assert_eq!(select_random(&d, 10, 3).unwrap().indices, p.indices);
        assert!(select_random(&d, 11, 3).is_err());
    }

    #[test]
    fn random_256_of_40000() {
        let d = labelled(vec![0.0; 40_000]);
        let p = select_random(&d, 256, 11).unwrap();
        let set: BTreeSet<_> = p.indices.iter().copied().collect();
        assert_eq!(set.len(), 256);
        assert_eq!(p.len(), 256);
    }

    #[test]
    fn stratified_examples() {
        let d = labelled(vec![1.0, 1.05, 2.0]);
        let p = select_stratified(&d, 0.1, 2, 0).unwrap();
        let mut got = p.samples.labels.clone();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, vec![1.0, 1.05, 2.0]);

        let d = labelled(vec![1.0, 1.01, 1.02, 1.03, 5.0]);
        let p = select_stratified(&d, 0.1, 2, 0).unwrap();
        assert_eq!(p.len(), 3);
        let p = select_stratified(&d, 0.1, 10, 0).unwrap();
        assert_eq!(p.len(), 5);

        let dense = labelled((0..=10_000).map(|i| i as f64 * 1e-3).collect());
        let p = select_stratified(&dense, 0.1, 2, 5).unwrap();
        assert!(p.len() <= 202);
        assert_eq!(
            select_stratified(&dense, 0.1, 2, 5).unwrap().indices,
            p.indices
        );
        assert!(select_stratified(&d, 0.0, 2, 0).is_err());
    }

    fn tiny_model() -> TdtModel {
        TdtModel::init(
            ModelSpec {
                input_dim: 3,
                hidden: 5,
                channels: 2,
                height: 2,
                width: 2,
                label_dim: 1,
                fusion_depth: 1,
                eps: 1e-5,
                b: MOMENT_MATCHED_B,
                output_scale: 4.0,
            },
            9,
        )
        .unwrap()
    }

    #[test]
    fn cache_is_transparent_and_invalidates() {
        let mut model = tiny_model();
        let mut r = rng::seeded(1);
        let inputs: Vec<f64> = (0..60).map(|_| rng::normal(&mut r)).collect();
        let d = Dataset::new(3, 1, inputs, (0..20).map(f64::from).collect()).unwrap();
        let priors = select_random(&d, 8, 2).unwrap();
        let cached = cache_prior_features(&model, &priors).unwrap();
        let a = priors.predictor(&model).unwrap();
        let b = cached.predictor(&model).unwrap();
        for t in 0..10 {
            let x = model.features(d.input(t)).unwrap();
            assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
        }

        let mut w = model.params.get("backbone.fc1.bias").unwrap().to_vec();
        w[0] += 0.1;
        model.params.set_values("backbone.fc1.bias", w).unwrap();
        assert!(matches!(
            cached.predictor(&model),
            Err(Error::StalePriorCache { .. })
        ));
        assert!(priors.predictor(&model).is_ok());
    }
}
