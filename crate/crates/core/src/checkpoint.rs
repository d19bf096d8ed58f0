//! Binary checkpoint: `TDT1`, a little-endian `u32` header length, a JSON
//! header, then raw little-endian `f64` payloads in header order.
//!
//! Parameters are written in name order followed by the prior inputs, labels
//! and (when cached) features, so saving a loaded checkpoint reproduces the
//! original bytes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, TdtModel};
use crate::prior::{FeatureCache, PriorSet, Selection};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"TDT1";
pub const FORMAT_VERSION: u32 = 1;

const PRIOR_INPUTS: &str = "prior.inputs";
const PRIOR_LABELS: &str = "prior.labels";
const PRIOR_FEATURES: &str = "prior.features";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload section.
    offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorRecord {
    selection: Selection,
    indices: Vec<usize>,
    cache_stamp: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: Config,
    model: ModelSpec,
    backbone_stamp: u64,
    tensors: Vec<TensorRecord>,
    prior: PriorRecord,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: Config,
    pub model: TdtModel,
    pub priors: PriorSet,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut named: Vec<(String, Vec<usize>, &[f64])> = self
            .model
            .params
            .iter()
            .map(|(n, e)| (n.to_string(), e.tensor.shape().to_vec(), e.tensor.data()))
            .collect();
        let s = &self.priors.samples;
        named.push((PRIOR_INPUTS.into(), vec![s.len(), s.input_dim], &s.inputs));
        named.push((PRIOR_LABELS.into(), vec![s.len(), s.label_dim], &s.labels));
        if let Some(c) = &self.priors.cache {
            named.push((PRIOR_FEATURES.into(), c.features.shape().to_vec(), c.features.data()));
        }

        let mut offset = 0;
        let mut tensors = Vec::with_capacity(named.len());
        for (name, shape, data) in &named {
            tensors.push(TensorRecord {
                name: name.clone(),
                shape: shape.clone(),
                offset,
            });
            offset += data.len() * 8;
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            model: self.model.spec.clone(),
            backbone_stamp: self.model.backbone_stamp(),
            tensors,
            prior: PriorRecord {
                selection: self.priors.selection.clone(),
                indices: self.priors.indices.clone(),
                cache_stamp: self.priors.cache.as_ref().map(|c| c.stamp),
            },
        };
        let json = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
        let len = u32::try_from(json.len()).map_err(|_| corrupt("header too large"))?;

        let mut out = Vec::with_capacity(8 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in &named {
            for v in *data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic, not a checkpoint file"));
        }
        let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(8..8 + len).ok_or_else(|| corrupt("truncated header"))?;
        let probe: serde_json::Value =
            serde_json::from_slice(body).map_err(|e| corrupt(format!("header: {e}")))?;
        let version = probe.get("format_version").and_then(|v| v.as_u64());
        if version != Some(FORMAT_VERSION as u64) {
            return Err(corrupt(format!(
                "unsupported format version {version:?}, expected {FORMAT_VERSION}"
            )));
        }
        let header: Header = serde_json::from_value(probe).map_err(|e| corrupt(format!("header: {e}")))?;
        let payload = &bytes[8 + len..];

        let mut expected = 0;
        let mut read = |rec: &TensorRecord| -> Result<Tensor> {
            if rec.offset != expected {
                return Err(corrupt(format!("tensor `{}` is out of order", rec.name)));
            }
            let n: usize = rec.shape.iter().product();
            let raw = payload
                .get(rec.offset..rec.offset + 8 * n)
                .ok_or_else(|| corrupt(format!("tensor `{}` is truncated", rec.name)))?;
            expected += 8 * n;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            Tensor::new(&rec.shape, data)
        };

        let mut model = TdtModel::init(header.model.clone(), 0)?;
        let mut prior_inputs = None;
        let mut prior_labels = None;
        let mut prior_features = None;
        let mut seen = 0;
        for rec in &header.tensors {
            let t = read(rec)?;
            match rec.name.as_str() {
                PRIOR_INPUTS => prior_inputs = Some(t),
                PRIOR_LABELS => prior_labels = Some(t),
                PRIOR_FEATURES => prior_features = Some(t),
                name => {
                    let want = model
                        .params
                        .get(name)
                        .map_err(|_| corrupt(format!("unexpected tensor `{name}`")))?
                        .shape()
                        .to_vec();
                    if want != rec.shape {
                        return Err(corrupt(format!(
                            "tensor `{name}` has shape {:?}, model expects {want:?}",
                            rec.shape
                        )));
                    }
                    model.params.set_values(name, t.to_vec())?;
                    seen += 1;
                }
            }
        }
        if expected != payload.len() {
            return Err(corrupt("trailing bytes after the last tensor"));
        }
        if seen != model.params.len() {
            return Err(corrupt("missing parameter tensors"));
        }
        if model.backbone_stamp() != header.backbone_stamp {
            return Err(corrupt("backbone stamp does not match the stored weights"));
        }

        let inputs = prior_inputs.ok_or_else(|| corrupt("missing prior inputs"))?;
        let labels = prior_labels.ok_or_else(|| corrupt("missing prior labels"))?;
        let samples = Dataset::new(
            header.model.input_dim,
            header.model.label_dim,
            inputs.to_vec(),
            labels.to_vec(),
        )?;
        if header.prior.indices.len() != samples.len() {
            return Err(corrupt("prior index count does not match the prior samples"));
        }
        let cache = match (prior_features, header.prior.cache_stamp) {
            (Some(features), Some(stamp)) => Some(FeatureCache { features, stamp }),
            (None, None) => None,
            _ => return Err(corrupt("prior features and cache stamp must appear together")),
        };
        Ok(Checkpoint {
            config: header.config,
            model,
            priors: PriorSet {
                samples,
                indices: header.prior.indices,
                selection: header.prior.selection,
                cache,
            },
        })
    }

    /// Writes to a sibling temp file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let file_name = path
            .file_name()
            .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
        let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
