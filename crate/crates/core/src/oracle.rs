//! Bit-faithful functional references: triple-loop GEMM with 64-bit
//! accumulation, direct convolution, and the img2col lowering. Ground truth
//! for every engine.

use crate::error::{SimError, SimResult};
use crate::matrix::{Matrix, Tensor};
use serde::{Deserialize, Serialize};

/// C = alpha * A x B + beta * C with explicit layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemmProblem {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: f32,
    pub beta: f32,
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl GemmProblem {
    pub fn new(alpha: f32, beta: f32, a: Matrix, b: Matrix, c: Matrix) -> SimResult<GemmProblem> {
        let (m, k) = (a.rows, a.cols);
        let n = b.cols;
        let p = GemmProblem {
            m,
            n,
            k,
            alpha,
            beta,
            a,
            b,
            c,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> SimResult<()> {
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return Err(SimError::Dimension("GEMM dims must be positive".into()));
        }
        if self.a.rows != self.m || self.a.cols != self.k {
            return Err(SimError::Dimension("A dims mismatch".into()));
        }
        if self.b.rows != self.k || self.b.cols != self.n {
            return Err(SimError::Dimension("B dims mismatch".into()));
        }
        if self.c.rows != self.m || self.c.cols != self.n {
            return Err(SimError::Dimension("C dims mismatch".into()));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite())
            || !self.a.all_finite()
            || !self.b.all_finite()
            || !self.c.all_finite()
        {
            return Err(SimError::Dimension("non-finite values".into()));
        }
        Ok(())
    }
}

/// Exact triple-loop GEMM, 64-bit accumulation, rounded to 32-bit at the end.
pub fn gemm_reference(p: &GemmProblem) -> SimResult<Matrix> {
    p.validate()?;
    let (m, n, k) = (p.m, p.n, p.k);
    let a = p.a.to_row_major();
    let b = p.b.to_row_major();
    let c = p.c.to_row_major();
    let alpha = p.alpha as f64;
    let beta = p.beta as f64;
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let mut acc = 0.0f64;
            for (l, &av) in arow.iter().enumerate() {
                acc += av as f64 * b[l * n + j] as f64;
            }
            out[i * n + j] = (alpha * acc + beta * c[i * n + j] as f64) as f32;
        }
    }
    Matrix::from_rows(m, n, out)
}

/// Convolution layer geometry (square stride/pad, NCHW).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub kernel_r: usize,
    pub kernel_s: usize,
    pub out_c: usize,
    pub stride: usize,
    pub pad: usize,
    pub batch: usize,
}

impl ConvLayer {
    /// Output height/width; errors unless both are positive integers.
    pub fn out_dims(&self) -> SimResult<(usize, usize)> {
        if self.stride == 0 {
            return Err(SimError::Shape("stride must be positive".into()));
        }
        let num_h = self.in_h + 2 * self.pad;
        let num_w = self.in_w + 2 * self.pad;
        if num_h < self.kernel_r || num_w < self.kernel_s {
            return Err(SimError::Shape("kernel larger than padded input".into()));
        }
        if (num_h - self.kernel_r) % self.stride != 0 || (num_w - self.kernel_s) % self.stride != 0
        {
            return Err(SimError::Shape(
                "output dims are not integers for this stride/pad".into(),
            ));
        }
        let e = (num_h - self.kernel_r) / self.stride + 1;
        let f = (num_w - self.kernel_s) / self.stride + 1;
        if e == 0 || f == 0 {
            return Err(SimError::Shape("empty output".into()));
        }
        Ok((e, f))
    }

    /// GEMM dims after img2col: m = batch*E*F, k = R*S*C, n = out_c.
    pub fn gemm_dims(&self) -> SimResult<(usize, usize, usize)> {
        let (e, f) = self.out_dims()?;
        Ok((
            self.batch * e * f,
            self.out_c,
            self.kernel_r * self.kernel_s * self.in_c,
        ))
    }

    pub fn macs(&self) -> SimResult<u64> {
        let (m, n, k) = self.gemm_dims()?;
        Ok(m as u64 * n as u64 * k as u64)
    }

    fn check_shapes(&self, input: &Tensor, weights: &Tensor) -> SimResult<()> {
        if input.dims != [self.batch, self.in_c, self.in_h, self.in_w] {
            return Err(SimError::Shape(format!(
                "input dims {:?} do not match layer",
                input.dims
            )));
        }
        if weights.dims != [self.out_c, self.in_c, self.kernel_r, self.kernel_s] {
            return Err(SimError::Shape(format!(
                "weight dims {:?} do not match layer",
                weights.dims
            )));
        }
        Ok(())
    }
}

/// Lowers a convolution to a GEMM by materializing the patch matrix.
/// The k index runs as (c * R + r) * S + s, the same order the direct
/// convolution accumulates in, so the two oracles agree exactly.
pub fn img2col(layer: &ConvLayer, input: &Tensor, weights: &Tensor) -> SimResult<GemmProblem> {
    layer.check_shapes(input, weights)?;
    let (e, f) = layer.out_dims()?;
    let (m, n, k) = layer.gemm_dims()?;
    let mut a = vec![0.0f32; m * k];
    for b in 0..layer.batch {
        for oh in 0..e {
            for ow in 0..f {
                let row = (b * e + oh) * f + ow;
                for c in 0..layer.in_c {
                    for r in 0..layer.kernel_r {
                        for s in 0..layer.kernel_s {
                            let ih = oh * layer.stride + r;
                            let iw = ow * layer.stride + s;
                            let col = (c * layer.kernel_r + r) * layer.kernel_s + s;
                            let v = if ih < layer.pad
                                || iw < layer.pad
                                || ih - layer.pad >= layer.in_h
                                || iw - layer.pad >= layer.in_w
                            {
                                0.0
                            } else {
                                input.get(b, c, ih - layer.pad, iw - layer.pad)
                            };
                            a[row * k + col] = v;
                        }
                    }
                }
            }
        }
    }
    // Weight matrix: k x n, column j = filter j unrolled in the same k order.
    let mut bmat = vec![0.0f32; k * n];
    for j in 0..layer.out_c {
        for c in 0..layer.in_c {
            for r in 0..layer.kernel_r {
                for s in 0..layer.kernel_s {
                    let row = (c * layer.kernel_r + r) * layer.kernel_s + s;
                    bmat[row * n + j] = weights.get(j, c, r, s);
                }
            }
        }
    }
    GemmProblem::new(
        1.0,
        0.0,
        Matrix::from_rows(m, k, a)?,
        Matrix::from_rows(k, n, bmat)?,
        Matrix::zeros(m, n),
    )
}

/// Direct sliding-window convolution, 64-bit accumulation. Output is
/// [batch, out_c, E, F].
pub fn conv_reference(layer: &ConvLayer, input: &Tensor, weights: &Tensor) -> SimResult<Tensor> {
    layer.check_shapes(input, weights)?;
    let (e, f) = layer.out_dims()?;
    let mut out = Tensor::zeros([layer.batch, layer.out_c, e, f]);
    for b in 0..layer.batch {
        for j in 0..layer.out_c {
            for oh in 0..e {
                for ow in 0..f {
                    let mut acc = 0.0f64;
                    for c in 0..layer.in_c {
                        for r in 0..layer.kernel_r {
                            for s in 0..layer.kernel_s {
                                let ih = oh * layer.stride + r;
                                let iw = ow * layer.stride + s;
                                if ih < layer.pad
                                    || iw < layer.pad
                                    || ih - layer.pad >= layer.in_h
                                    || iw - layer.pad >= layer.in_w
                                {
                                    continue;
                                }
                                acc += input.get(b, c, ih - layer.pad, iw - layer.pad) as f64
                                    * weights.get(j, c, r, s) as f64;
                            }
                        }
                    }
                    out.set(b, j, oh, ow, acc as f32);
                }
            }
        }
    }
    Ok(out)
}
