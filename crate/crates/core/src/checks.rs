//! Registered gradient and property checks run by `tdt gradcheck` and
//! `tdt propcheck`.

use std::fmt;

use rand::Rng as _;

use crate::distributions::{delta_tau, delta_tau_with_stats, triangular_pdf, TriangularDist, MOMENT_MATCHED_B};
use crate::error::Result;
use crate::harness::metrics::cumulative_accuracy;
use crate::losses::{
    loss_angular, loss_commutativity, loss_pair_supervised, loss_symmetry, smooth_l1, tdt_losses, LossSwitches,
};
use crate::rng;
use crate::tdt::{Predictor, TdtHead};
use crate::tensor::gradcheck::{gradcheck, project, KINK_EXCLUSION, REL_TOL};
use crate::tensor::{BinaryOp, FeatureStats, Op, Tensor, UnaryOp};

pub const GRADCHECK_SEEDS: u64 = 20;
const MAX_REDRAWS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    /// Worst observed value of the checked quantity (an error, unless noted).
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} value={:.3e} tol={:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )?;
        if !self.note.is_empty() {
            write!(f, " {}", self.note)?;
        }
        Ok(())
    }
}

fn within(name: &str, value: f64, tolerance: f64, note: impl Into<String>) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        value,
        tolerance,
        passed: value.is_finite() && value <= tolerance,
        note: note.into(),
    }
}

// ---------------------------------------------------------------- gradcheck

type Builder = fn(&mut rng::Rng) -> Vec<Tensor>;
type Forward = fn(&[Tensor]) -> Result<Tensor>;

struct GradCase {
    name: &'static str,
    inputs: Builder,
    f: Forward,
}

fn uniform(shape: &[usize], lo: f64, hi: f64, r: &mut rng::Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.gen_range(lo..hi)).collect()).expect("shape matches")
}

fn u(shape: &[usize], r: &mut rng::Rng) -> Tensor {
    uniform(shape, -1.0, 1.0, r)
}

/// Values with magnitude in `[0.2, 1)` and random sign.
fn away_from_zero(shape: &[usize], r: &mut rng::Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = r.gen_range(0.2..1.0);
            if r.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).expect("shape matches")
}

fn tiny_head(p: &[Tensor]) -> Result<TdtHead> {
    TdtHead::new(
        vec![(p[0].clone(), p[1].clone()), (p[2].clone(), p[3].clone())],
        p[4].clone(),
        p[5].clone(),
        3.0,
        TriangularDist::default(),
        1e-5,
    )
}

fn head_params(c: usize, label_dim: usize, r: &mut rng::Rng) -> Vec<Tensor> {
    vec![
        u(&[c, 2 * c], r).mul_scalar(0.5),
        u(&[c], r).mul_scalar(0.1),
        u(&[c, c], r).mul_scalar(0.5),
        u(&[c], r).mul_scalar(0.1),
        u(&[c, label_dim], r),
        u(&[label_dim], r),
    ]
}

macro_rules! unary {
    ($name:expr, $kind:expr, $build:expr) => {
        GradCase {
            name: $name,
            inputs: $build,
            f: |p| p[0].unary($kind),
        }
    };
}

fn registry() -> Vec<GradCase> {
    vec![
        GradCase {
            name: "add",
            inputs: |r| vec![u(&[2, 3], r), u(&[3], r)],
            f: |p| p[0].binary(BinaryOp::Add, &p[1]),
        },
        GradCase {
            name: "sub",
            inputs: |r| vec![u(&[2, 1, 2], r), u(&[3, 1], r)],
            f: |p| p[0].binary(BinaryOp::Sub, &p[1]),
        },
        GradCase {
            name: "mul",
            inputs: |r| vec![u(&[2, 3], r), u(&[2, 1], r)],
            f: |p| p[0].binary(BinaryOp::Mul, &p[1]),
        },
        GradCase {
            name: "div",
            inputs: |r| vec![u(&[2, 3], r), away_from_zero(&[3], r)],
            f: |p| p[0].binary(BinaryOp::Div, &p[1]),
        },
        unary!("neg", UnaryOp::Neg, |r| vec![u(&[3, 2], r)]),
        unary!("abs", UnaryOp::Abs, |r| vec![u(&[3, 2], r)]),
        unary!("relu", UnaryOp::Relu, |r| vec![u(&[3, 2], r)]),
        unary!("square", UnaryOp::Square, |r| vec![u(&[3, 2], r)]),
        unary!("exp", UnaryOp::Exp, |r| vec![u(&[3, 2], r)]),
        unary!("sqrt", UnaryOp::Sqrt, |r| vec![uniform(&[3, 2], 0.1, 2.0, r)]),
        unary!("acos", UnaryOp::Acos, |r| vec![uniform(&[3, 2], -0.9, 0.9, r)]),
        unary!("clamp", UnaryOp::Clamp { lo: -0.5, hi: 0.5 }, |r| vec![u(&[3, 2], r)]),
        unary!("smooth_l1", UnaryOp::SmoothL1 { beta: 1.0 }, |r| vec![uniform(&[3, 2], -2.0, 2.0, r)]),
        unary!("add_scalar", UnaryOp::AddScalar(0.7), |r| vec![u(&[4], r)]),
        unary!("sub_scalar", UnaryOp::SubScalar(0.7), |r| vec![u(&[4], r)]),
        unary!("rsub_scalar", UnaryOp::RSubScalar(0.7), |r| vec![u(&[4], r)]),
        unary!("mul_scalar", UnaryOp::MulScalar(-1.3), |r| vec![u(&[4], r)]),
        unary!("div_scalar", UnaryOp::DivScalar(2.5), |r| vec![u(&[4], r)]),
        GradCase {
            name: "affine",
            inputs: |r| vec![u(&[3, 4], r), u(&[4, 2], r), u(&[2], r)],
            f: |p| p[0].affine(&p[1], &p[2]),
        },
        GradCase {
            name: "conv1x1",
            inputs: |r| vec![u(&[2, 4, 3, 3], r), u(&[3, 4], r), u(&[3], r)],
            f: |p| p[0].conv1x1(&p[1], &p[2]),
        },
        GradCase {
            name: "sum_axes",
            inputs: |r| vec![u(&[2, 3, 2], r)],
            f: |p| p[0].sum_axes(&[0, 2]),
        },
        GradCase {
            name: "mean_axes",
            inputs: |r| vec![u(&[2, 3, 2, 2], r)],
            f: |p| p[0].mean_axes(&[2, 3]),
        },
        GradCase {
            name: "sum",
            inputs: |r| vec![u(&[2, 3], r)],
            f: |p| Ok(p[0].sum()),
        },
        GradCase {
            name: "mean",
            inputs: |r| vec![u(&[2, 3], r)],
            f: |p| p[0].mean(),
        },
        GradCase {
            name: "reshape",
            inputs: |r| vec![u(&[2, 6], r)],
            f: |p| p[0].reshape(&[3, 2, 2]),
        },
        GradCase {
            name: "gap",
            inputs: |r| vec![u(&[2, 3, 2, 2], r)],
            f: |p| p[0].gap(),
        },
        GradCase {
            name: "spatial_mean_std",
            inputs: |r| vec![u(&[1, 2, 3, 3], r)],
            f: |p| {
                let st = p[0].spatial_mean_std(1e-5)?;
                st.mu.add(&st.sigma.mul_scalar(1.7))
            },
        },
        GradCase {
            name: "row_norm",
            inputs: |r| vec![u(&[3, 2, 2], r)],
            f: |p| p[0].row_norm(),
        },
        GradCase {
            name: "concat",
            inputs: |r| vec![u(&[1, 3], r), u(&[2, 3], r)],
            f: |p| Tensor::concat(&[p[0].clone(), p[1].clone()], 0),
        },
        GradCase {
            name: "concat_channels",
            inputs: |r| vec![u(&[2, 1, 2, 2], r), u(&[2, 2, 2, 2], r)],
            f: |p| p[0].concat_channels(&p[1]),
        },
        GradCase {
            name: "narrow",
            inputs: |r| vec![u(&[3, 5], r)],
            f: |p| p[0].narrow(1, 1, 3),
        },
        GradCase {
            name: "expand",
            inputs: |r| vec![u(&[1, 2, 1, 2], r)],
            f: |p| p[0].expand(&[3, 2, 2, 2]),
        },
        GradCase {
            name: "repeat_batch",
            inputs: |r| vec![u(&[1, 2, 2, 2], r)],
            f: |p| p[0].repeat_batch(3),
        },
        GradCase {
            name: "triangular_pdf",
            inputs: |r| vec![uniform(&[2, 5], -3.0, 3.0, r)],
            f: |p| Ok(triangular_pdf(&p[0], TriangularDist::default())),
        },
        GradCase {
            name: "delta_tau",
            inputs: |r| vec![u(&[2, 2, 2, 2], r), u(&[2, 2, 2, 2], r)],
            f: |p| delta_tau(&p[0], &p[1], TriangularDist::default(), 1e-5),
        },
        GradCase {
            name: "fuse_center",
            inputs: |r| {
                let mut v = vec![u(&[1, 2, 2, 2], r), u(&[3, 2, 2, 2], r)];
                v.extend(head_params(2, 1, r));
                v
            },
            f: |p| tiny_head(&p[2..])?.fuse_center(&p[0], &p[1]),
        },
        GradCase {
            name: "predict_delta",
            inputs: |r| {
                let mut v = vec![u(&[2, 2, 2, 2], r), u(&[2, 2, 2, 2], r)];
                v.extend(head_params(2, 2, r));
                v
            },
            f: |p| tiny_head(&p[2..])?.predict_delta(&p[0], &p[1]),
        },
        GradCase {
            name: "backbone",
            inputs: |r| vec![u(&[2, 5], r), u(&[5, 4], r), u(&[4], r), u(&[4, 8], r), u(&[8], r)],
            f: |p| p[0].affine(&p[1], &p[2])?.relu().affine(&p[3], &p[4])?.reshape(&[2, 2, 2, 2]),
        },
        GradCase {
            name: "loss_symmetry",
            inputs: |r| vec![u(&[3, 2, 2, 2], r), u(&[3, 2, 2, 2], r)],
            f: |p| loss_symmetry(&p[0], &p[1]),
        },
        GradCase {
            name: "loss_commutativity",
            inputs: |r| vec![u(&[2, 2, 2, 2], r), u(&[2, 2, 2, 2], r)],
            f: |p| loss_commutativity(&p[0], &p[1], TriangularDist::default(), 1e-5),
        },
        GradCase {
            name: "loss_pair_supervised",
            inputs: |r| {
                let mut v = vec![u(&[2, 2, 2, 2], r), u(&[2, 2, 2, 2], r), u(&[2, 2, 2, 2], r)];
                v.extend(head_params(2, 1, r));
                v
            },
            f: |p| {
                let head = tiny_head(&p[3..])?;
                loss_pair_supervised(&p[0], &p[1], &p[2], &[0.3, -0.4], &[0.9, 0.5], &head)
            },
        },
        GradCase {
            name: "smooth_l1_loss",
            inputs: |r| vec![uniform(&[6], -2.0, 2.0, r)],
            f: |p| smooth_l1(&p[0], 1.0),
        },
        GradCase {
            name: "loss_angular",
            inputs: |r| vec![uniform(&[3, 3], 0.2, 1.0, r), uniform(&[3, 3], 0.2, 1.0, r)],
            f: |p| loss_angular(&p[0], &p[1]),
        },
        GradCase {
            name: "composed_l_t",
            inputs: |r| {
                let mut v = vec![u(&[1, 2, 2, 2], r), u(&[3, 2, 2, 2], r)];
                v.extend(head_params(2, 1, r));
                v
            },
            f: |p| {
                let head = tiny_head(&p[2..])?;
                let sw = LossSwitches::default();
                Ok(tdt_losses(&head, &p[0], &p[1], &[0.2], &[0.5, -0.3, 0.1], sw)?.0)
            },
        },
        GradCase {
            name: "composed_l_t_angular",
            inputs: |r| {
                let mut v = vec![u(&[1, 2, 2, 2], r), u(&[2, 2, 2, 2], r)];
                v.extend(head_params(2, 3, r));
                v
            },
            f: |p| {
                let head = tiny_head(&p[2..])?;
                let sw = LossSwitches {
                    angular: true,
                    ..LossSwitches::default()
                };
                let y1 = [0.6, 0.5, 0.4];
                let y2 = [0.7, 0.2, 0.3, 0.3, 0.8, 0.5];
                Ok(tdt_losses(&head, &p[0], &p[1], &y1, &y2, sw)?.0)
            },
        },
    ]
}

/// Names of every registered gradient case.
pub fn gradcheck_names() -> Vec<&'static str> {
    registry().iter().map(|c| c.name).collect()
}

/// Identity in the forward pass whose backward scales the gradient by
/// `1 + bias`. Used as a negative control.
struct Miscalibrated {
    bias: f64,
}

impl Op for Miscalibrated {
    fn name(&self) -> &'static str {
        "miscalibrated"
    }

    fn backward(&self, _: &[Tensor], _: &Tensor, grad: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        vec![needs[0].then(|| grad.iter().map(|g| g * (1.0 + self.bias)).collect())]
    }
}

fn miscalibrate(t: Tensor) -> Tensor {
    Tensor::from_op(t.shape().to_vec(), t.to_vec(), vec![t], Miscalibrated { bias: 0.05 })
}

/// Runs every case on `GRADCHECK_SEEDS` random instances. Draws whose kink
/// margin is below the exclusion radius are redrawn. When `negative_control`
/// names a case, that case's analytic gradient is deliberately scaled by 1.05.
pub fn gradcheck_suite(seed: u64, negative_control: Option<&str>) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (k, case) in registry().into_iter().enumerate() {
        let perturb = negative_control == Some(case.name);
        let f = |p: &[Tensor]| -> Result<Tensor> {
            let y = (case.f)(p)?;
            Ok(if perturb { miscalibrate(y) } else { y })
        };
        let mut worst = 0.0f64;
        let mut checked = 0;
        let mut all_passed = true;
        for s in 0..GRADCHECK_SEEDS {
            let mut r = rng::derived(seed, (k as u64) << 32 | s);
            let proj = seed ^ (k as u64 * 1000 + s);
            let mut inputs = None;
            for _ in 0..MAX_REDRAWS {
                let draw = (case.inputs)(&mut r);
                let vars: Vec<Tensor> = draw.iter().map(|t| t.clone().into_var()).collect();
                if f(&vars)?.kink_margin() > KINK_EXCLUSION {
                    inputs = Some(draw);
                    break;
                }
            }
            let Some(inputs) = inputs else {
                all_passed = false;
                continue;
            };
            let rep = gradcheck(case.name, &inputs, |p| project(&f(p)?, proj))?;
            worst = worst.max(rep.max_rel_err);
            checked += rep.checked;
            all_passed &= rep.passed();
        }
        let note = if perturb {
            format!("checked={checked} (negative control)")
        } else {
            format!("checked={checked}")
        };
        let mut o = within(case.name, worst, REL_TOL, note);
        o.passed &= all_passed && checked > 0 && worst < REL_TOL;
        out.push(o);
    }
    Ok(out)
}

// ---------------------------------------------------------------- propcheck

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    let mut n = ((b - a) / h).round() as usize;
    n += n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64);
    }
    acc * h / 3.0
}

pub const QUADRATURE_STEP: f64 = 1e-3;
pub const QUADRATURE_TOL: f64 = 1e-6;
pub const MIDPOINT_TOL: f64 = 1e-10;
pub const MIDPOINT_CONSTRUCTIONS: usize = 1000;

pub fn integral_check(b: f64) -> CheckOutcome {
    let d = TriangularDist::new(b).expect("positive b");
    let v = simpson(|s| d.pdf(s), -b - 1.0, b + 1.0, QUADRATURE_STEP);
    within(&format!("pdf_integral_b{b:.4}"), (v - 1.0).abs(), QUADRATURE_TOL, format!("integral={v:.12}"))
}

pub fn variance_check() -> CheckOutcome {
    let d = TriangularDist::default();
    let b = d.b();
    let v = simpson(|s| s * s * d.pdf(s), -b - 1.0, b + 1.0, QUADRATURE_STEP);
    within("pdf_variance", (v - 1.0).abs(), QUADRATURE_TOL, format!("variance={v:.12}"))
}

pub fn cdf_center_check() -> CheckOutcome {
    let v = TriangularDist::default().cdf(0.0);
    let mut o = within("cdf_at_zero", (v - 0.5).abs(), 0.0, format!("F(0)={v}"));
    o.passed = v == 0.5;
    o
}

/// Central differences of `F` against `τ` on a grid of step 1e-4 over
/// `[-b-0.5, b+0.5]`, skipping points within the FD step of a kink.
pub fn cdf_derivative_check() -> CheckOutcome {
    let d = TriangularDist::default();
    let b = d.b();
    let h = 1e-7;
    let mut worst = 0.0f64;
    let mut n = 0;
    let steps = ((2.0 * b + 1.0) / 1e-4) as usize;
    for i in 0..=steps {
        let s = -b - 0.5 + 1e-4 * i as f64;
        if [-b, 0.0, b].iter().any(|k| (s - k).abs() <= 2.0 * h) {
            continue;
        }
        let fd = (d.cdf(s + h) - d.cdf(s - h)) / (2.0 * h);
        worst = worst.max((fd - d.pdf(s)).abs());
        n += 1;
    }
    within("cdf_derivative", worst, 1e-6, format!("points={n}"))
}

pub fn evenness_check() -> CheckOutcome {
    let d = TriangularDist::default();
    let mut worst_cdf = 0.0f64;
    let mut exact = true;
    for i in 0..=6000 {
        let s = -3.0 + 1e-3 * i as f64;
        exact &= d.pdf(s) == d.pdf(-s);
        worst_cdf = worst_cdf.max((d.cdf(s) + d.cdf(-s) - 1.0).abs());
    }
    let mut o = within("evenness", worst_cdf, 1e-12, "pdf exact, cdf reflection");
    o.passed &= exact;
    o
}

/// Shared-statistics constructions where every standardized value of the
/// two endpoints lies on one linear branch and `xs` is their exact midpoint.
pub fn midpoint_identity_check(seed: u64) -> Result<CheckOutcome> {
    let dist = TriangularDist::default();
    let b = dist.b();
    let mut r = rng::derived(seed, 0x3D);
    let (c, h, w) = (4, 3, 3);
    let mut worst = 0.0f64;
    for _ in 0..MIDPOINT_CONSTRUCTIONS {
        let mu: Vec<f64> = (0..c).map(|_| r.gen_range(-2.0..2.0)).collect();
        let sigma: Vec<f64> = (0..c).map(|_| r.gen_range(0.2..3.0)).collect();
        let mut x1 = Vec::with_capacity(c * h * w);
        let mut x2 = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            for _ in 0..h * w {
                let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
                let s1: f64 = sign * r.gen_range(0.0..b);
                let s2: f64 = sign * r.gen_range(0.0..b);
                x1.push(mu[ch] + sigma[ch] * s1);
                x2.push(mu[ch] + sigma[ch] * s2);
            }
        }
        let shape = [1, c, h, w];
        let x1 = Tensor::new(&shape, x1)?;
        let x2 = Tensor::new(&shape, x2)?;
        let xs = x1.add(&x2)?.mul_scalar(0.5);
        let stats = FeatureStats {
            mu: Tensor::new(&[1, c, 1, 1], mu)?,
            sigma: Tensor::new(&[1, c, 1, 1], sigma)?,
        };
        let g = |t: Tensor| -> Result<f64> { t.abs().gap()?.sum().item() };
        let full = g(delta_tau_with_stats(&x1, &x2, &stats, dist)?)?;
        let h1 = g(delta_tau_with_stats(&xs, &x1, &stats, dist)?)?;
        let h2 = g(delta_tau_with_stats(&xs, &x2, &stats, dist)?)?;
        worst = worst.max((full - 2.0 * h1).abs()).max((full - 2.0 * h2).abs());
    }
    Ok(within(
        "midpoint_identity",
        worst,
        MIDPOINT_TOL,
        format!("constructions={MIDPOINT_CONSTRUCTIONS}"),
    ))
}

/// `τ(s1) − τ(s2)` is affine in `s2` along a branch.
pub fn branch_linearity_check(seed: u64) -> CheckOutcome {
    let d = TriangularDist::default();
    let b = d.b();
    let mut r = rng::derived(seed, 0x11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        let s1 = r.gen_range(-b..b);
        let xs: Vec<f64> = (0..20).map(|_| sign * r.gen_range(0.0..b)).collect();
        let ys: Vec<f64> = xs.iter().map(|&s2| d.pdf(s1) - d.pdf(s2)).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let k = sxy / sxx;
        for (x, y) in xs.iter().zip(&ys) {
            worst = worst.max((y - my - k * (x - mx)).abs());
        }
    }
    within("branch_linearity", worst, 1e-12, "max fit residual")
}

/// Grad of `a·L1 + b·L2` equals `a·grad L1 + b·grad L2`.
pub fn backward_linearity_check(seed: u64) -> Result<CheckOutcome> {
    let mut r = rng::derived(seed, 0x22);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x = u(&[3, 4], &mut r).into_var();
        let w = u(&[4, 2], &mut r);
        let (a, b) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
        let l1 = || -> Result<Tensor> { Ok(x.affine(&w, &Tensor::zeros(&[2]))?.square().sum()) };
        let l2 = || -> Result<Tensor> { Ok(x.exp().sum()) };
        let g = l1()?.mul_scalar(a).add(&l2()?.mul_scalar(b))?.backward()?.wrt(&x);
        let g1 = l1()?.backward()?.wrt(&x);
        let g2 = l2()?.backward()?.wrt(&x);
        for i in 0..g.len() {
            worst = worst.max((g[i] - a * g1[i] - b * g2[i]).abs());
        }
    }
    Ok(within("backward_linearity", worst, 1e-10, ""))
}

/// Left and right slopes of smooth-L1 agree at `|x| = β`.
pub fn smooth_l1_continuity_check() -> Result<CheckOutcome> {
    let h = 1e-8;
    let f = |x: f64| -> Result<f64> { smooth_l1(&Tensor::from_vec(vec![x]), 1.0)?.item() };
    let mut worst = 0.0f64;
    for x0 in [-1.0, 1.0] {
        let left = (f(x0)? - f(x0 - h)?) / h;
        let right = (f(x0 + h)? - f(x0)?) / h;
        worst = worst.max((left - x0).abs()).max((right - x0).abs());
    }
    Ok(within("smooth_l1_c1", worst, 1e-6, "slopes at |x| = beta"))
}

/// Symmetric in its arguments and invariant to positive rescaling.
pub fn angular_invariance_check(seed: u64) -> Result<CheckOutcome> {
    let mut r = rng::derived(seed, 0x33);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let p = uniform(&[3], 0.05, 1.0, &mut r);
        let q = uniform(&[3], 0.05, 1.0, &mut r);
        let k = r.gen_range(0.1..10.0);
        let base = loss_angular(&p, &q)?.item()?;
        worst = worst
            .max((loss_angular(&q, &p)?.item()? - base).abs())
            .max((loss_angular(&p.mul_scalar(k), &q)?.item()? - base).abs());
    }
    Ok(within("angular_invariance", worst, 1e-9, "degrees"))
}

/// Reordering the priors leaves the averaged prediction unchanged exactly.
pub fn permutation_check(seed: u64) -> Result<CheckOutcome> {
    let mut r = rng::derived(seed, 0x44);
    let c = 3;
    let params = head_params(c, 1, &mut r);
    let head = tiny_head(&params)?;
    let n = 12;
    let priors = u(&[n, c, 2, 2], &mut r);
    let labels: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..70.0)).collect();
    let test = u(&[1, c, 2, 2], &mut r);
    let base = Predictor::new(head.clone(), &priors, &labels)?.predict(&test)?.mean[0];
    let mut order: Vec<usize> = (0..n).collect();
    let mut mismatches = 0;
    for _ in 0..20 {
        rng::shuffle_prefix(&mut r, &mut order, n);
        let rows: Vec<Tensor> = order.iter().map(|&i| priors.narrow(0, i, 1)).collect::<Result<_>>()?;
        let perm = Tensor::concat(&rows, 0)?;
        let lab: Vec<f64> = order.iter().map(|&i| labels[i]).collect();
        let got = Predictor::new(head.clone(), &perm, &lab)?.predict(&test)?.mean[0];
        if got != base {
            mismatches += 1;
        }
    }
    let mut o = within("prior_permutation", mismatches as f64, 0.0, "mismatching permutations");
    o.passed = mismatches == 0;
    Ok(o)
}

pub fn ca_monotone_check(seed: u64) -> CheckOutcome {
    let mut r = rng::derived(seed, 0x55);
    let mut violations = 0;
    for _ in 0..200 {
        let errs: Vec<f64> = (0..30).map(|_| r.gen_range(0.0..10.0)).collect();
        let ca: Vec<f64> = (0..=10).map(|n| cumulative_accuracy(&errs, n as f64)).collect();
        violations += ca.windows(2).filter(|w| w[1] < w[0]).count();
        violations += ca.iter().filter(|v| !(0.0..=100.0).contains(*v)).count();
    }
    let mut o = within("ca_monotone", violations as f64, 0.0, "violations");
    o.passed = violations == 0;
    o
}

pub fn propcheck_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        integral_check(1.0),
        integral_check(MOMENT_MATCHED_B),
        integral_check(3.0),
        variance_check(),
        cdf_center_check(),
        cdf_derivative_check(),
        evenness_check(),
        midpoint_identity_check(seed)?,
        branch_linearity_check(seed),
        backward_linearity_check(seed)?,
        smooth_l1_continuity_check()?,
        angular_invariance_check(seed)?,
        permutation_check(seed)?,
        ca_monotone_check(seed),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = simpson(|x| x * x * x + x, 0.0, 2.0, 0.1);
        assert!((v - 6.0).abs() < 1e-12);
    }

    #[test]
    fn props_pass() {
        for o in propcheck_suite(0).unwrap() {
            assert!(o.passed, "{o}");
        }
    }

    #[test]
    fn registry_passes() {
        for o in gradcheck_suite(7, None).unwrap() {
            assert!(o.passed, "{o}");
        }
    }

    #[test]
    fn negative_control_names_the_op() {
        let out = gradcheck_suite(1, Some("conv1x1")).unwrap();
        let failed: Vec<_> = out.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
        assert_eq!(failed, ["conv1x1"]);
        assert!(out.iter().find(|o| o.name == "conv1x1").unwrap().to_string().starts_with("FAIL conv1x1"));
    }
}
