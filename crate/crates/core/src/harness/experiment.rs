//! Datasets, priors and a fresh model built from a [`Config`].

use super::synth::SynthGenerator;
use super::train::{train, TrainOptions, TrainOutcome};
use crate::config::Config;
use crate::data::Dataset;
use crate::error::Result;
use crate::model::TdtModel;
use crate::prior::{select_random, select_stratified, PriorSet, Selection};

const TEST_SEED_OFFSET: u64 = 0x7E57;

#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: Config,
    pub generator: SynthGenerator,
    pub train_set: Dataset,
    pub test_set: Dataset,
    /// `true` for the leading labeled part of the training set.
    pub labeled: Vec<bool>,
    pub priors: PriorSet,
}

impl Experiment {
    pub fn new(config: &Config) -> Result<Self> {
        config.validate()?;
        let generator = SynthGenerator::new(config.task.clone())?;
        let train_set = generator.generate(config.data.n_train, config.data.seed)?;
        let test_set = generator.generate(config.data.n_test, config.data.seed ^ TEST_SEED_OFFSET)?;
        let n_lab = config.labeled_count();
        let labeled: Vec<bool> = (0..train_set.len()).map(|i| i < n_lab).collect();
        let labeled_set = train_set.subset(&(0..n_lab).collect::<Vec<_>>());
        let priors = match config.prior {
            Selection::Random { n, seed } => select_random(&labeled_set, n, seed)?,
            Selection::Stratified {
                bin_width,
                per_bin,
                seed,
            } => select_stratified(&labeled_set, bin_width, per_bin, seed)?,
        };
        Ok(Experiment {
            config: config.clone(),
            generator,
            train_set,
            test_set,
            labeled,
            priors,
        })
    }

    pub fn fresh_model(&self) -> Result<TdtModel> {
        TdtModel::init(self.config.model_spec(), self.config.model.init_seed)
    }

    /// Trains a fresh model; unlabeled samples (if any) only see `L_S`/`L_M`.
    pub fn train(&self, validation: Option<&Dataset>) -> Result<TrainOutcome> {
        let semi = self.labeled.iter().any(|l| !l);
        let options = TrainOptions {
            labeled: semi.then_some(self.labeled.as_slice()),
            validation,
        };
        train(&self.train_set, &self.priors, self.fresh_model()?, &self.config.train, options)
    }
}
