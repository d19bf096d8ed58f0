use super::broadcast::{aligned_strides, broadcast_shape, for_each2};
use super::{Op, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
        }
    }
}

struct BinaryNode {
    kind: BinaryOp,
}

impl Op for BinaryNode {
    fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn backward(
        &self,
        inputs: &[Tensor],
        output: &Tensor,
        grad: &[f64],
        needs: &[bool],
    ) -> Vec<Option<Vec<f64>>> {
        let (a, b) = (&inputs[0], &inputs[1]);
        let out = output.shape();
        let sa = aligned_strides(a.shape(), out);
        let sb = aligned_strides(b.shape(), out);
        let (av, bv) = (a.data(), b.data());
        let mut ga = needs[0].then(|| vec![0.0; a.numel()]);
        let mut gb = needs[1].then(|| vec![0.0; b.numel()]);
        for_each2(out, &sa, &sb, |o, ia, ib| {
            let g = grad[o];
            let (da, db) = match self.kind {
                BinaryOp::Add => (1.0, 1.0),
                BinaryOp::Sub => (1.0, -1.0),
                BinaryOp::Mul => (bv[ib], av[ia]),
                BinaryOp::Div => (1.0 / bv[ib], -av[ia] / (bv[ib] * bv[ib])),
            };
            if let Some(ga) = ga.as_mut() {
                ga[ia] += g * da;
            }
            if let Some(gb) = gb.as_mut() {
                gb[ib] += g * db;
            }
        });
        vec![ga, gb]
    }
}

/// Elementwise maps of one tensor. Scalar-operand forms of the binary ops are
/// expressed here so that no constant tensor enters the graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryOp {
    Neg,
    Abs,
    Relu,
    Square,
    Sqrt,
    Exp,
    /// `acos` of the input clamped to [-1, 1]; the derivative is taken as zero
    /// where `|x| >= 1 - 1e-12`.
    Acos,
    Clamp { lo: f64, hi: f64 },
    SmoothL1 { beta: f64 },
    AddScalar(f64),
    SubScalar(f64),
    /// `s - x`
    RSubScalar(f64),
    MulScalar(f64),
    DivScalar(f64),
}

pub(crate) const ACOS_GUARD: f64 = 1e-12;

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Relu => "relu",
            UnaryOp::Square => "square",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Acos => "acos",
            UnaryOp::Clamp { .. } => "clamp",
            UnaryOp::SmoothL1 { .. } => "smooth_l1",
            UnaryOp::AddScalar(_) => "add_scalar",
            UnaryOp::SubScalar(_) => "sub_scalar",
            UnaryOp::RSubScalar(_) => "rsub_scalar",
            UnaryOp::MulScalar(_) => "mul_scalar",
            UnaryOp::DivScalar(_) => "div_scalar",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Neg => -x,
            UnaryOp::Abs => x.abs(),
            UnaryOp::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            UnaryOp::Square => x * x,
            UnaryOp::Sqrt => x.sqrt(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Acos => x.clamp(-1.0, 1.0).acos(),
            UnaryOp::Clamp { lo, hi } => x.clamp(lo, hi),
            UnaryOp::SmoothL1 { beta } => {
                let ax = x.abs();
                if ax < beta {
                    0.5 * x * x / beta
                } else {
                    ax - 0.5 * beta
                }
            }
            UnaryOp::AddScalar(s) => x + s,
            UnaryOp::SubScalar(s) => x - s,
            UnaryOp::RSubScalar(s) => s - x,
            UnaryOp::MulScalar(s) => x * s,
            UnaryOp::DivScalar(s) => x / s,
        }
    }

    /// d(apply)/dx at `x`, given the forward value `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryOp::Neg => -1.0,
            UnaryOp::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            UnaryOp::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryOp::Square => 2.0 * x,
            UnaryOp::Sqrt => {
                if y > 0.0 {
                    0.5 / y
                } else {
                    0.0
                }
            }
            UnaryOp::Exp => y,
            UnaryOp::Acos => {
                if x.abs() < 1.0 - ACOS_GUARD {
                    -1.0 / (1.0 - x * x).sqrt()
                } else {
                    0.0
                }
            }
            UnaryOp::Clamp { lo, hi } => {
                if x > lo && x < hi {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryOp::SmoothL1 { beta } => (x / beta).clamp(-1.0, 1.0),
            UnaryOp::AddScalar(_) | UnaryOp::SubScalar(_) => 1.0,
            UnaryOp::RSubScalar(_) => -1.0,
            UnaryOp::MulScalar(s) => s,
            UnaryOp::DivScalar(s) => 1.0 / s,
        }
    }

    fn kinks(self) -> &'static [f64] {
        match self {
            UnaryOp::Abs | UnaryOp::Relu | UnaryOp::Sqrt => &[0.0],
            UnaryOp::Acos => &[-1.0, 1.0],
            _ => &[],
        }
    }
}

struct UnaryNode {
    kind: UnaryOp,
}

impl Op for UnaryNode {
    fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn backward(
        &self,
        inputs: &[Tensor],
        output: &Tensor,
        grad: &[f64],
        _needs: &[bool],
    ) -> Vec<Option<Vec<f64>>> {
        let x = inputs[0].data();
        let y = output.data();
        let g = grad
            .iter()
            .zip(x.iter().zip(y))
            .map(|(g, (&x, &y))| g * self.kind.derivative(x, y))
            .collect();
        vec![Some(g)]
    }

    fn kink_margin(&self, inputs: &[Tensor]) -> Option<f64> {
        let x = inputs[0].data();
        let dist = |points: &[f64]| {
            x.iter()
                .flat_map(|&v| points.iter().map(move |&p| (v - p).abs()))
                .fold(f64::INFINITY, f64::min)
        };
        match self.kind {
            UnaryOp::Clamp { lo, hi } => Some(dist(&[lo, hi])),
            kind if !kind.kinks().is_empty() => Some(dist(kind.kinks())),
            _ => None,
        }
    }
}

impl Tensor {
    pub fn binary(&self, kind: BinaryOp, rhs: &Tensor) -> Result<Tensor> {
        let out = broadcast_shape(self.shape(), rhs.shape()).ok_or_else(|| Error::ShapeMismatch {
            op: kind.name(),
            lhs: self.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        })?;
        if kind == BinaryOp::Div && rhs.data().contains(&0.0) {
            return Err(Error::DivisionByZero { op: "div" });
        }
        let (av, bv) = (self.data(), rhs.data());
        let data = if self.shape() == rhs.shape() {
            av.iter().zip(bv).map(|(&a, &b)| kind.apply(a, b)).collect()
        } else {
            let sa = aligned_strides(self.shape(), &out);
            let sb = aligned_strides(rhs.shape(), &out);
            let mut data = vec![0.0; super::numel(&out)];
            for_each2(&out, &sa, &sb, |o, ia, ib| data[o] = kind.apply(av[ia], bv[ib]));
            data
        };
        Ok(Tensor::from_op(
            out,
            data,
            vec![self.clone(), rhs.clone()],
            BinaryNode { kind },
        ))
    }

    pub fn unary(&self, kind: UnaryOp) -> Result<Tensor> {
        match kind {
            UnaryOp::DivScalar(s) if s == 0.0 => {
                return Err(Error::DivisionByZero { op: "div_scalar" })
            }
            UnaryOp::Clamp { lo, hi } if lo > hi => {
                return Err(Error::InvalidArgument(format!("clamp bounds {lo} > {hi}")))
            }
            UnaryOp::SmoothL1 { beta } if beta <= 0.0 => {
                return Err(Error::InvalidArgument(format!("smooth_l1 beta must be > 0, got {beta}")))
            }
            UnaryOp::Sqrt if self.data().iter().any(|&v| v < 0.0) => {
                return Err(Error::InvalidArgument("sqrt of a negative value".into()))
            }
            _ => {}
        }
        Ok(self.map_unchecked(kind))
    }

    fn map_unchecked(&self, kind: UnaryOp) -> Tensor {
        let data = self.data().iter().map(|&x| kind.apply(x)).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            UnaryNode { kind },
        )
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Add, rhs)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Sub, rhs)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Mul, rhs)
    }

    pub fn div(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Div, rhs)
    }

    pub fn add_scalar(&self, s: f64) -> Tensor {
        self.map_unchecked(UnaryOp::AddScalar(s))
    }

    pub fn sub_scalar(&self, s: f64) -> Tensor {
        self.map_unchecked(UnaryOp::SubScalar(s))
    }

    /// `s - self`
    pub fn rsub_scalar(&self, s: f64) -> Tensor {
        self.map_unchecked(UnaryOp::RSubScalar(s))
    }

    pub fn mul_scalar(&self, s: f64) -> Tensor {
        self.map_unchecked(UnaryOp::MulScalar(s))
    }

    pub fn div_scalar(&self, s: f64) -> Result<Tensor> {
        self.unary(UnaryOp::DivScalar(s))
    }

    pub fn neg(&self) -> Tensor {
        self.map_unchecked(UnaryOp::Neg)
    }

    pub fn abs(&self) -> Tensor {
        self.map_unchecked(UnaryOp::Abs)
    }

    pub fn relu(&self) -> Tensor {
        self.map_unchecked(UnaryOp::Relu)
    }

    pub fn square(&self) -> Tensor {
        self.map_unchecked(UnaryOp::Square)
    }

    pub fn exp(&self) -> Tensor {
        self.map_unchecked(UnaryOp::Exp)
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        self.unary(UnaryOp::Sqrt)
    }

    pub fn acos(&self) -> Tensor {
        self.map_unchecked(UnaryOp::Acos)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor> {
        self.unary(UnaryOp::Clamp { lo, hi })
    }

    pub fn smooth_l1(&self, beta: f64) -> Result<Tensor> {
        self.unary(UnaryOp::SmoothL1 { beta })
    }
}
