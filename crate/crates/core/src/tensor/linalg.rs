use super::{Op, Tensor};
use crate::error::{Error, Result};

/// Row-major matrix view: `(data, rows, cols, transposed)`.
#[derive(Clone, Copy)]
struct Mat<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    transposed: bool,
}

impl<'a> Mat<'a> {
    fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Mat {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    /// Logical transpose of a stored `rows × cols` matrix.
    fn t(self) -> Self {
        Mat {
            rows: self.cols,
            cols: self.rows,
            transposed: !self.transposed,
            ..self
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.rows as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `c (+)= a · b` with `c` row-major `a.rows × b.cols`.
fn gemm(a: Mat<'_>, b: Mat<'_>, c: &mut [f64], accumulate: bool) {
    assert_eq!(a.cols, b.rows);
    assert_eq!(c.len(), a.rows * b.cols);
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices cover every index addressed by the given extents and
    // strides (checked by the asserts above and the Mat constructors).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct AffineNode {
    n: usize,
    d_in: usize,
    d_out: usize,
}

impl Op for AffineNode {
    fn name(&self) -> &'static str {
        "affine"
    }

    fn backward(
        &self,
        inputs: &[Tensor],
        _output: &Tensor,
        grad: &[f64],
        needs: &[bool],
    ) -> Vec<Option<Vec<f64>>> {
        let (x, w) = (inputs[0].data(), inputs[1].data());
        let g = Mat::new(grad, self.n, self.d_out);
        let gx = needs[0].then(|| {
            let mut gx = vec![0.0; self.n * self.d_in];
            gemm(g, Mat::new(w, self.d_in, self.d_out).t(), &mut gx, false);
            gx
        });
        let gw = needs[1].then(|| {
            let mut gw = vec![0.0; self.d_in * self.d_out];
            gemm(Mat::new(x, self.n, self.d_in).t(), g, &mut gw, false);
            gw
        });
        let gb = needs[2].then(|| {
            let mut gb = vec![0.0; self.d_out];
            for row in grad.chunks_exact(self.d_out) {
                for (b, g) in gb.iter_mut().zip(row) {
                    *b += g;
                }
            }
            gb
        });
        vec![gx, gw, gb]
    }
}

struct Conv1x1Node {
    n: usize,
    c_in: usize,
    c_out: usize,
    pixels: usize,
}

impl Op for Conv1x1Node {
    fn name(&self) -> &'static str {
        "conv1x1"
    }

    fn backward(
        &self,
        inputs: &[Tensor],
        _output: &Tensor,
        grad: &[f64],
        needs: &[bool],
    ) -> Vec<Option<Vec<f64>>> {
        let (x, w) = (inputs[0].data(), inputs[1].data());
        let (ci, co, p) = (self.c_in, self.c_out, self.pixels);
        let wm = Mat::new(w, co, ci);
        let gx = needs[0].then(|| {
            let mut gx = vec![0.0; self.n * ci * p];
            for (gx_n, g_n) in gx.chunks_exact_mut(ci * p).zip(grad.chunks_exact(co * p)) {
                gemm(wm.t(), Mat::new(g_n, co, p), gx_n, false);
            }
            gx
        });
        let gw = needs[1].then(|| {
            let mut gw = vec![0.0; co * ci];
            for (x_n, g_n) in x.chunks_exact(ci * p).zip(grad.chunks_exact(co * p)) {
                gemm(Mat::new(g_n, co, p), Mat::new(x_n, ci, p).t(), &mut gw, true);
            }
            gw
        });
        let gb = needs[2].then(|| {
            let mut gb = vec![0.0; co];
            for g_n in grad.chunks_exact(co * p) {
                for (b, plane) in gb.iter_mut().zip(g_n.chunks_exact(p)) {
                    *b += plane.iter().sum::<f64>();
                }
            }
            gb
        });
        vec![gx, gw, gb]
    }
}

impl Tensor {
    /// `x · w + bias` for `x: N×D_in`, `w: D_in×D_out`, `bias: D_out`.
    pub fn affine(&self, w: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let mismatch = |lhs: &Tensor, rhs: &Tensor| Error::ShapeMismatch {
            op: "affine",
            lhs: lhs.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        };
        let (&[n, d_in], &[w_in, d_out]) = (self.shape(), w.shape()) else {
            return Err(mismatch(self, w));
        };
        if d_in != w_in {
            return Err(mismatch(self, w));
        }
        if bias.shape() != [d_out] {
            return Err(mismatch(w, bias));
        }
        if d_out == 0 {
            return Err(Error::InvalidShape {
                op: "affine",
                msg: "output width must be positive".into(),
            });
        }
        let mut data = vec![0.0; n * d_out];
        gemm(
            Mat::new(self.data(), n, d_in),
            Mat::new(w.data(), d_in, d_out),
            &mut data,
            false,
        );
        for row in data.chunks_exact_mut(d_out) {
            for (y, b) in row.iter_mut().zip(bias.data()) {
                *y += b;
            }
        }
        Ok(Tensor::from_op(
            vec![n, d_out],
            data,
            vec![self.clone(), w.clone(), bias.clone()],
            AffineNode { n, d_in, d_out },
        ))
    }

    /// Per-pixel channel mixing for `x: N×C_in×h×w`, `w: C_out×C_in`, `bias: C_out`.
    pub fn conv1x1(&self, w: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let mismatch = |lhs: &Tensor, rhs: &Tensor| Error::ShapeMismatch {
            op: "conv1x1",
            lhs: lhs.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        };
        let (&[n, c_in, h, wd], &[c_out, w_in]) = (self.shape(), w.shape()) else {
            return Err(mismatch(self, w));
        };
        if c_in != w_in {
            return Err(mismatch(self, w));
        }
        if bias.shape() != [c_out] {
            return Err(mismatch(w, bias));
        }
        let pixels = h * wd;
        if pixels == 0 || c_in == 0 || c_out == 0 {
            return Err(Error::InvalidShape {
                op: "conv1x1",
                msg: format!("empty extent in {:?} -> {c_out} channels", self.shape()),
            });
        }
        let wm = Mat::new(w.data(), c_out, c_in);
        let mut data = vec![0.0; n * c_out * pixels];
        for (y_n, x_n) in data
            .chunks_exact_mut(c_out * pixels)
            .zip(self.data().chunks_exact(c_in * pixels))
        {
            gemm(wm, Mat::new(x_n, c_in, pixels), y_n, false);
            for (plane, b) in y_n.chunks_exact_mut(pixels).zip(bias.data()) {
                for y in plane {
                    *y += b;
                }
            }
        }
        Ok(Tensor::from_op(
            vec![n, c_out, h, wd],
            data,
            vec![self.clone(), w.clone(), bias.clone()],
            Conv1x1Node {
                n,
                c_in,
                c_out,
                pixels,
            },
        ))
    }
}
