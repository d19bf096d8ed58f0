//! Frozen nonlinear generator for synthetic regression tasks.
//!
//! A label `y` becomes an input by `t = (y - lo)/(hi - lo)`, an affine lift
//! `z = A·t + c`, `warp_depth` rounds of `z += 0.5·sin(ω⊙z + φ)` with
//! `ω ∈ [1, 2)` (each round is monotone, so the map stays injective), then
//! additive Gaussian noise.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

const LIFT_STD: f64 = 2.0;
const WARP_AMPLITUDE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthTaskSpec {
    pub label_range: [f64; 2],
    /// `[C, h, w]`; inputs have `C·h·w` values.
    pub feature_shape: [usize; 3],
    #[serde(default = "one")]
    pub label_dim: usize,
    pub generator_seed: u64,
    pub noise_sigma: f64,
    pub warp_depth: usize,
}

fn one() -> usize {
    1
}

impl SynthTaskSpec {
    pub fn input_dim(&self) -> usize {
        self.feature_shape.iter().product()
    }

    pub fn span(&self) -> f64 {
        self.label_range[1] - self.label_range[0]
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.label_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config("task.label_range", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        if self.feature_shape.contains(&0) {
            return Err(Error::config("task.feature_shape", "extents must be positive"));
        }
        if self.label_dim == 0 || self.label_dim > self.input_dim() {
            return Err(Error::config(
                "task.label_dim",
                format!("must be in 1..={}", self.input_dim()),
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("task.noise_sigma", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthGenerator {
    spec: SynthTaskSpec,
    /// `D×label_dim`, row-major.
    lift: Vec<f64>,
    offset: Vec<f64>,
    /// `(ω, φ)` per warp round.
    warps: Vec<(Vec<f64>, Vec<f64>)>,
}

impl SynthGenerator {
    pub fn new(spec: SynthTaskSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.input_dim();
        let mut r = rng::seeded(spec.generator_seed);
        let lift = (0..d * spec.label_dim).map(|_| LIFT_STD * rng::normal(&mut r)).collect();
        let offset = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
        let warps = (0..spec.warp_depth)
            .map(|_| {
                let omega = (0..d).map(|_| r.gen_range(1.0..2.0)).collect();
                let phi = (0..d).map(|_| r.gen_range(0.0..std::f64::consts::TAU)).collect();
                (omega, phi)
            })
            .collect();
        Ok(SynthGenerator {
            spec,
            lift,
            offset,
            warps,
        })
    }

    pub fn spec(&self) -> &SynthTaskSpec {
        &self.spec
    }

    /// Noise-free input for a label.
    pub fn clean(&self, y: &[f64]) -> Vec<f64> {
        let [lo, _] = self.spec.label_range;
        let span = self.spec.span();
        let t: Vec<f64> = y.iter().map(|v| (v - lo) / span).collect();
        let k = self.spec.label_dim;
        let mut z: Vec<f64> = self
            .offset
            .iter()
            .enumerate()
            .map(|(i, c)| c + (0..k).map(|j| self.lift[i * k + j] * t[j]).sum::<f64>())
            .collect();
        for (omega, phi) in &self.warps {
            for ((z, w), p) in z.iter_mut().zip(omega).zip(phi) {
                *z += WARP_AMPLITUDE * (w * *z + p).sin();
            }
        }
        z
    }

    pub fn sample(&self, y: &[f64], r: &mut rng::Rng) -> Vec<f64> {
        let mut x = self.clean(y);
        if self.spec.noise_sigma > 0.0 {
            for v in &mut x {
                *v += self.spec.noise_sigma * rng::normal(r);
            }
        }
        x
    }

    /// `n` samples with labels uniform over the label range.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::InvalidArgument("synth_generate needs n >= 1".into()));
        }
        let [lo, hi] = self.spec.label_range;
        let mut r = rng::seeded(seed);
        let mut inputs = Vec::with_capacity(n * self.spec.input_dim());
        let mut labels = Vec::with_capacity(n * self.spec.label_dim);
        for _ in 0..n {
            let y: Vec<f64> = (0..self.spec.label_dim).map(|_| r.gen_range(lo..hi)).collect();
            inputs.extend(self.sample(&y, &mut r));
            labels.extend(y);
        }
        Dataset::new(self.spec.input_dim(), self.spec.label_dim, inputs, labels)
    }

    /// Least-squares label for an input: coarse grid scan, then golden-section
    /// refinement. Only for scalar labels.
    pub fn invert(&self, x: &[f64]) -> Result<f64> {
        if self.spec.label_dim != 1 {
            return Err(Error::InvalidArgument("inverse oracle needs label_dim 1".into()));
        }
        let cost = |y: f64| -> f64 {
            self.clean(&[y])
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        };
        let [lo, hi] = self.spec.label_range;
        let steps: usize = 2000;
        let h = (hi - lo) / steps as f64;
        let best = (0..=steps)
            .map(|i| (cost(lo + h * i as f64), i))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("nonempty grid")
            .1;
        let (mut a, mut b) = (
            lo + h * best.saturating_sub(1) as f64,
            (lo + h * (best + 1) as f64).min(hi),
        );
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..60 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if cost(c) < cost(d) {
                b = d;
            } else {
                a = c;
            }
        }
        Ok(0.5 * (a + b))
    }
}

pub fn synth_generate(spec: &SynthTaskSpec, n: usize, seed: u64) -> Result<Dataset> {
    SynthGenerator::new(spec.clone())?.generate(n, seed)
}
