//! The trainable model: backbone, fusion layers, and linear head in one
//! parameter store.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distributions::TriangularDist;
use crate::error::{Error, Result};
use crate::rng;
use crate::tdt::TdtHead;
use crate::tensor::{ParamStore, Tensor};

pub const BACKBONE_PREFIX: &str = "backbone.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Flattened input width.
    pub input_dim: usize,
    pub hidden: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub label_dim: usize,
    pub fusion_depth: usize,
    /// Added to the spatial variance before the square root.
    pub eps: f64,
    /// Triangular half-width.
    pub b: f64,
    /// Fixed gain on the head output, in label units.
    pub output_scale: f64,
}

impl ModelSpec {
    pub fn feature_shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn feature_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("model.input_dim", self.input_dim),
            ("model.hidden", self.hidden),
            ("model.channels", self.channels),
            ("model.height", self.height),
            ("model.width", self.width),
            ("model.label_dim", self.label_dim),
            ("model.fusion_depth", self.fusion_depth),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.height * self.width < 2 {
            return Err(Error::config(
                "model.height",
                "spatial extent height*width must be at least 2",
            ));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config("model.eps", "must be positive"));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::config("model.b", "must be positive"));
        }
        if !(self.output_scale > 0.0 && self.output_scale.is_finite()) {
            return Err(Error::config("model.output_scale", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TdtModel {
    pub spec: ModelSpec,
    pub params: ParamStore,
}

fn gaussian(n: usize, std: f64, rng: &mut rng::Rng) -> Vec<f64> {
    (0..n).map(|_| std * rng::normal(rng)).collect()
}

impl TdtModel {
    /// Fresh parameters: He-scaled backbone, fusion near the channel-wise
    /// average of its two inputs, small head weights with zero bias.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::seeded(seed);
        let mut params = ParamStore::new();
        let (d_in, hid, c) = (spec.input_dim, spec.hidden, spec.channels);
        let d_feat = spec.feature_len();

        let w1 = gaussian(d_in * hid, (2.0 / d_in as f64).sqrt(), &mut rng);
        params.insert("backbone.fc1.weight", Tensor::new(&[d_in, hid], w1)?, true)?;
        params.insert("backbone.fc1.bias", Tensor::zeros(&[hid]), true)?;
        let w2 = gaussian(hid * d_feat, (1.0 / hid as f64).sqrt(), &mut rng);
        params.insert("backbone.fc2.weight", Tensor::new(&[hid, d_feat], w2)?, true)?;
        let b2 = gaussian(d_feat, 0.5, &mut rng);
        params.insert("backbone.fc2.bias", Tensor::new(&[d_feat], b2)?, true)?;

        for layer in 0..spec.fusion_depth {
            let c_in = if layer == 0 { 2 * c } else { c };
            let mut w = gaussian(c * c_in, 0.01 / (c_in as f64).sqrt(), &mut rng);
            for o in 0..c {
                if layer == 0 {
                    w[o * c_in + o] += 0.5;
                    w[o * c_in + c + o] += 0.5;
                } else {
                    w[o * c_in + o] += 1.0;
                }
            }
            params.insert(&format!("fusion.{layer}.weight"), Tensor::new(&[c, c_in], w)?, true)?;
            params.insert(&format!("fusion.{layer}.bias"), Tensor::zeros(&[c]), true)?;
        }

        let hw = gaussian(c * spec.label_dim, 0.1 / (c as f64).sqrt(), &mut rng);
        params.insert("head.weight", Tensor::new(&[c, spec.label_dim], hw)?, true)?;
        params.insert("head.bias", Tensor::zeros(&[spec.label_dim]), true)?;
        Ok(TdtModel { spec, params })
    }

    pub fn dist(&self) -> TriangularDist {
        TriangularDist::new(self.spec.b).expect("validated spec")
    }

    pub fn head(&self) -> Result<TdtHead> {
        let fusion = (0..self.spec.fusion_depth)
            .map(|l| {
                Ok((
                    self.params.get(&format!("fusion.{l}.weight"))?.clone(),
                    self.params.get(&format!("fusion.{l}.bias"))?.clone(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        TdtHead::new(
            fusion,
            self.params.get("head.weight")?.clone(),
            self.params.get("head.bias")?.clone(),
            self.spec.output_scale,
            self.dist(),
            self.spec.eps,
        )
    }

    /// `affine -> relu -> affine -> reshape` on an `N×input_dim` batch.
    pub fn backbone_forward(&self, inputs: &Tensor) -> Result<Tensor> {
        let n = match *inputs.shape() {
            [n, d] if d == self.spec.input_dim => n,
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "backbone",
                    lhs: inputs.shape().to_vec(),
                    rhs: vec![self.spec.input_dim],
                })
            }
        };
        let p = &self.params;
        let hidden = inputs
            .affine(p.get("backbone.fc1.weight")?, p.get("backbone.fc1.bias")?)?
            .relu();
        let out = hidden.affine(p.get("backbone.fc2.weight")?, p.get("backbone.fc2.bias")?)?;
        let [c, h, w] = self.spec.feature_shape();
        out.reshape(&[n, c, h, w])
    }

    /// Backbone features for a flat row-major batch of inputs.
    pub fn features(&self, inputs: &[f64]) -> Result<Tensor> {
        let d = self.spec.input_dim;
        if !inputs.len().is_multiple_of(d) {
            return Err(Error::InvalidShape {
                op: "backbone",
                msg: format!("{} values is not a multiple of input width {d}", inputs.len()),
            });
        }
        let x = Tensor::new(&[inputs.len() / d, d], inputs.to_vec())?;
        self.backbone_forward(&x)
    }

    /// Digest of the backbone parameter values; any change to them changes it.
    pub fn backbone_stamp(&self) -> u64 {
        let mut hasher = Sha256::new();
        for (name, entry) in self.params.iter() {
            if !name.starts_with(BACKBONE_PREFIX) {
                continue;
            }
            hasher.update(name.as_bytes());
            for v in entry.tensor.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{gradcheck, project, KINK_EXCLUSION};

    pub(crate) fn small_spec() -> ModelSpec {
        ModelSpec {
            input_dim: 5,
            hidden: 4,
            channels: 2,
            height: 2,
            width: 2,
            label_dim: 1,
            fusion_depth: 1,
            eps: 1e-5,
            b: crate::distributions::MOMENT_MATCHED_B,
            output_scale: 1.0,
        }
    }

    #[test]
    fn backbone_zero_weights_gives_bias() {
        let mut m = TdtModel::init(small_spec(), 1).unwrap();
        for name in ["backbone.fc1.weight", "backbone.fc2.weight"] {
            let n = m.params.get(name).unwrap().numel();
            m.params.set_values(name, vec![0.0; n]).unwrap();
        }
        let out = m.features(&[0.3, -1.0, 2.0, 0.5, 0.1]).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2, 2]);
        assert_eq!(out.data(), m.params.get("backbone.fc2.bias").unwrap().data());
    }

    #[test]
    fn backbone_full_size_feature_shape() {
        let spec = ModelSpec {
            input_dim: 16,
            hidden: 8,
            channels: 128,
            height: 3,
            width: 3,
            ..small_spec()
        };
        let m = TdtModel::init(spec, 2).unwrap();
        let out = m.features(&[0.1; 32]).unwrap();
        assert_eq!(out.shape(), &[2, 128, 3, 3]);
    }

    #[test]
    fn backbone_gradcheck() {
        let m = TdtModel::init(small_spec(), 3).unwrap();
        let names = [
            "backbone.fc1.weight",
            "backbone.fc1.bias",
            "backbone.fc2.weight",
            "backbone.fc2.bias",
        ];
        let mut seed = 0;
        loop {
            let x = Tensor::new(&[2, 5], {
                let mut r = rng::seeded(seed);
                gaussian(10, 1.0, &mut r)
            })
            .unwrap();
            seed += 1;
            let inputs: Vec<Tensor> = names.iter().map(|n| m.params.get(n).unwrap().clone()).collect();
            let r = gradcheck("backbone", &inputs, |p| {
                let h = x.affine(&p[0], &p[1])?.relu();
                project(&h.affine(&p[2], &p[3])?, 17)
            })
            .unwrap();
            if r.kink_margin < KINK_EXCLUSION {
                continue;
            }
            assert!(r.passed(), "{r:?}");
            break;
        }
    }

    #[test]
    fn stamp_tracks_backbone_only() {
        let mut m = TdtModel::init(small_spec(), 4).unwrap();
        let s0 = m.backbone_stamp();
        m.params.set_values("head.bias", vec![3.0]).unwrap();
        assert_eq!(m.backbone_stamp(), s0);
        let mut v = m.params.get("backbone.fc1.bias").unwrap().to_vec();
        v[0] += 1e-9;
        m.params.set_values("backbone.fc1.bias", v).unwrap();
        assert_ne!(m.backbone_stamp(), s0);
    }

    #[test]
    fn spec_validation() {
        let mut s = small_spec();
        s.channels = 0;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.eps = 0.0;
        assert!(s.validate().is_err());
    }
}
