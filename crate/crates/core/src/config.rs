//! TOML run configuration. Every field is explicit and unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::MOMENT_MATCHED_B;
use crate::error::{Error, Result};
use crate::harness::{SynthTaskSpec, TrainConfig};
use crate::model::ModelSpec;
use crate::prior::Selection;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Leading fraction of the training set that keeps its labels.
    #[serde(default = "full")]
    pub labeled_fraction: f64,
}

fn full() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub fusion_depth: usize,
    pub eps: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    /// Defaults to the label span.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_scale: Option<f64>,
    pub init_seed: u64,
}

fn default_b() -> f64 {
    MOMENT_MATCHED_B
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub task: SynthTaskSpec,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub prior: Selection,
    pub train: TrainConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = e
                .span()
                .map(|s| locate_key(text, s.start))
                .unwrap_or_else(|| "<document>".into());
            Error::config(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn labeled_count(&self) -> usize {
        ((self.data.n_train as f64) * self.data.labeled_fraction).floor() as usize
    }

    pub fn model_spec(&self) -> ModelSpec {
        let [c, h, w] = self.task.feature_shape;
        ModelSpec {
            input_dim: self.task.input_dim(),
            hidden: self.model.hidden,
            channels: c,
            height: h,
            width: w,
            label_dim: self.task.label_dim,
            fusion_depth: self.model.fusion_depth,
            eps: self.model.eps,
            b: self.model.b,
            output_scale: self.model.output_scale.unwrap_or(self.task.span()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        let d = &self.data;
        if d.n_train == 0 {
            return Err(Error::config("data.n_train", "must be at least 1"));
        }
        if d.n_test == 0 {
            return Err(Error::config("data.n_test", "must be at least 1"));
        }
        if !(d.labeled_fraction > 0.0 && d.labeled_fraction <= 1.0) {
            return Err(Error::config("data.labeled_fraction", "must be in (0, 1]"));
        }
        if self.labeled_count() == 0 {
            return Err(Error::config("data.labeled_fraction", "leaves no labeled samples"));
        }
        if self.model.hidden == 0 {
            return Err(Error::config("model.hidden", "must be at least 1"));
        }
        if self.model.fusion_depth == 0 {
            return Err(Error::config("model.fusion_depth", "must be at least 1"));
        }
        if !(self.model.eps > 0.0 && self.model.eps.is_finite()) {
            return Err(Error::config("model.eps", "must be positive"));
        }
        if !(self.model.b > 0.0 && self.model.b.is_finite()) {
            return Err(Error::config("model.b", "must be positive"));
        }
        if let Some(s) = self.model.output_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("model.output_scale", "must be positive"));
            }
        }
        match self.prior {
            Selection::Random { n, .. } => {
                if n == 0 {
                    return Err(Error::config("prior.n", "must be at least 1"));
                }
                if n > self.labeled_count() {
                    return Err(Error::config(
                        "prior.n",
                        format!("exceeds the {} labeled training samples", self.labeled_count()),
                    ));
                }
            }
            Selection::Stratified { bin_width, per_bin, .. } => {
                if !(bin_width > 0.0 && bin_width.is_finite()) {
                    return Err(Error::config("prior.bin_width", "must be positive"));
                }
                if per_bin == 0 {
                    return Err(Error::config("prior.per_bin", "must be at least 1"));
                }
            }
        }
        self.train.validate()?;
        if self.train.use_angular && self.task.label_dim != 3 {
            return Err(Error::config("train.use_angular", "needs task.label_dim = 3"));
        }
        Ok(())
    }
}

/// Dotted path of the innermost key whose value starts before `offset`.
fn locate_key(text: &str, offset: usize) -> String {
    let mut table = String::new();
    let mut key = String::new();
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        if pos > offset {
            break;
        }
        let t = line.trim();
        if t.starts_with('[') && t.ends_with(']') {
            table = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = t.split_once('=') {
            key = k.trim().to_string();
        }
        pos += line.len();
    }
    match (table.is_empty(), key.is_empty()) {
        (true, _) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}

/// A configuration for the desk-scale age analogue used throughout the tests.
pub fn age_analogue() -> Config {
    Config {
        task: SynthTaskSpec {
            label_range: [0.0, 70.0],
            feature_shape: [128, 3, 3],
            label_dim: 1,
            generator_seed: 7,
            noise_sigma: 1.0,
            warp_depth: 2,
        },
        data: DataConfig {
            n_train: 400,
            n_test: 200,
            seed: 100,
            labeled_fraction: 1.0,
        },
        model: ModelConfig {
            hidden: 64,
            fusion_depth: 1,
            eps: 1e-5,
            b: MOMENT_MATCHED_B,
            output_scale: None,
            init_seed: 0,
        },
        prior: Selection::Random { n: 256, seed: 0 },
        train: TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        },
    }
}
