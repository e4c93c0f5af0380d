//! Dense 2-D convolution lowered to GEMM through an im2col column buffer.

use std::borrow::Cow;

use rayon::prelude::*;

use crate::float::{gemm, Mat};
use crate::graph::{Backward, BackwardCtx};
use crate::{Float, Result, Shape, Tensor, TensorError, Var};

/// Stride and zero padding of a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub const SAME_3X3: ConvGeometry = ConvGeometry { stride: 1, padding: 1 };
}

/// Planar geometry of one im2col lowering.
#[derive(Clone, Copy, Debug)]
struct Lowering {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Lowering {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output columns `[lo, hi)` whose input column `ox * stride + kj - pad` is in range.
    fn valid_cols(&self, kj: usize) -> (usize, usize) {
        let mut lo = 0;
        while lo < self.ow && (lo * self.stride + kj) < self.pad {
            lo += 1;
        }
        let mut hi = self.ow;
        while hi > lo && ((hi - 1) * self.stride + kj) >= self.pad + self.w {
            hi -= 1;
        }
        (lo, hi)
    }
}

fn im2col<T: Float>(x: &[T], g: &Lowering, col: &mut [T]) {
    let ohw = g.cols();
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * ohw..(row + 1) * ohw];
                let (lo, hi) = g.valid_cols(kj);
                for oy in 0..g.oh {
                    let out = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize || lo >= hi {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    out[..lo].fill(T::zero());
                    out[hi..].fill(T::zero());
                    if g.stride == 1 {
                        let ix0 = lo + kj - g.pad;
                        out[lo..hi].copy_from_slice(&src[ix0..ix0 + (hi - lo)]);
                    } else {
                        for (ox, o) in out.iter_mut().enumerate().take(hi).skip(lo) {
                            *o = src[ox * g.stride + kj - g.pad];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Float>(col: &[T], g: &Lowering, dx: &mut [T]) {
    let ohw = g.cols();
    for ci in 0..g.c {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &col[row * ohw..(row + 1) * ohw];
                let (lo, hi) = g.valid_cols(kj);
                if lo >= hi {
                    continue;
                }
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let s = &src[oy * g.ow..(oy + 1) * g.ow];
                    for ox in lo..hi {
                        dst[ox * g.stride + kj - g.pad] += s[ox];
                    }
                }
            }
        }
    }
}

fn lowering(x: Shape, w: Shape, geo: ConvGeometry) -> Result<Lowering> {
    const OP: &str = "conv2d";
    if geo.stride == 0 {
        return Err(TensorError::InvalidArgument { op: OP, detail: "stride must be >= 1".into() });
    }
    if x.c != w.c {
        return Err(TensorError::ShapeMismatch {
            op: OP,
            detail: format!("input has {} channels but weight {} expects {}", x.c, w, w.c),
        });
    }
    let span_h = x.h + 2 * geo.padding;
    let span_w = x.w + 2 * geo.padding;
    if span_h < w.h || span_w < w.w || w.h == 0 || w.w == 0 {
        return Err(TensorError::EmptyOutput {
            op: OP,
            detail: format!("input {x} with padding {} and kernel {}x{}", geo.padding, w.h, w.w),
        });
    }
    Ok(Lowering {
        c: x.c,
        h: x.h,
        w: x.w,
        kh: w.h,
        kw: w.w,
        stride: geo.stride,
        pad: geo.padding,
        oh: (span_h - w.h) / geo.stride + 1,
        ow: (span_w - w.w) / geo.stride + 1,
    })
}

fn check_bias<T: Float>(bias: Option<&Tensor<T>>, c_out: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.numel() != c_out {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                detail: format!("bias has {} elements, expected {c_out}", b.numel()),
            });
        }
    }
    Ok(())
}

fn lowered<'a, T: Float>(x: &'a [T], g: &Lowering) -> Cow<'a, [T]> {
    if g.is_pointwise() {
        Cow::Borrowed(x)
    } else {
        let mut col = vec![T::zero(); g.rows() * g.cols()];
        im2col(x, g, &mut col);
        Cow::Owned(col)
    }
}

/// Forward convolution. `weight` is `(c_out, c_in, kh, kw)`, `bias` holds `c_out` values.
pub fn conv2d_forward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    geo: ConvGeometry,
) -> Result<Tensor<T>> {
    let ws = weight.shape();
    let g = lowering(x.shape(), ws, geo)?;
    check_bias(bias, ws.n)?;
    let out_shape = Shape::new(x.shape().n, ws.n, g.oh, g.ow);
    let mut out = Tensor::zeros(out_shape);
    let item = out_shape.item();
    let wmat = Mat::new(weight.data(), ws.n, g.rows());
    out.data_mut().par_chunks_mut(item.max(1)).enumerate().for_each(|(n, out_n)| {
        if let Some(b) = bias {
            for (co, row) in out_n.chunks_mut(g.cols()).enumerate() {
                row.fill(b.data()[co]);
            }
        }
        let col = lowered(x.batch_item(n), &g);
        gemm(wmat, Mat::new(&col, g.rows(), g.cols()), T::one(), out_n);
    });
    Ok(out)
}

/// Gradients of a convolution; entries are `None` where `needs` is false.
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    geo: ConvGeometry,
    needs: [bool; 3],
) -> Result<ConvGrads<T>> {
    let ws = weight.shape();
    let g = lowering(x.shape(), ws, geo)?;
    let xs = x.shape();
    let gs = grad_out.shape();
    if gs != Shape::new(xs.n, ws.n, g.oh, g.ow) {
        return Err(TensorError::ShapeMismatch { op: "conv2d_backward", detail: format!("upstream gradient {gs}") });
    }
    let [need_x, need_w, need_b] = needs;
    let wmat = Mat::new(weight.data(), ws.n, g.rows());

    let mut dx = need_x.then(|| Tensor::zeros(xs));
    if let Some(dx) = dx.as_mut() {
        dx.data_mut().par_chunks_mut(xs.item().max(1)).enumerate().for_each(|(n, dx_n)| {
            let go = Mat::new(grad_out.batch_item(n), ws.n, g.cols());
            if g.is_pointwise() {
                gemm(wmat.t(), go, T::zero(), dx_n);
            } else {
                let mut dcol = vec![T::zero(); g.rows() * g.cols()];
                gemm(wmat.t(), go, T::zero(), &mut dcol);
                col2im(&dcol, &g, dx_n);
            }
        });
    }

    // Per-item partial weight gradients, reduced in batch order so the result
    // does not depend on the worker count.
    let dw = need_w.then(|| {
        let partials: Vec<Vec<T>> = (0..xs.n)
            .into_par_iter()
            .map(|n| {
                let col = lowered(x.batch_item(n), &g);
                let go = Mat::new(grad_out.batch_item(n), ws.n, g.cols());
                let mut part = vec![T::zero(); ws.numel()];
                gemm(go, Mat::new(&col, g.rows(), g.cols()).t(), T::zero(), &mut part);
                part
            })
            .collect();
        let mut acc = Tensor::zeros(ws);
        for p in partials {
            for (a, v) in acc.data_mut().iter_mut().zip(p) {
                *a += v;
            }
        }
        acc
    });

    let db = need_b.then(|| {
        let mut acc = vec![T::zero(); ws.n];
        for n in 0..xs.n {
            for (co, row) in grad_out.batch_item(n).chunks(g.cols()).enumerate() {
                acc[co] += row.iter().copied().sum::<T>();
            }
        }
        Tensor::from_vec([1, ws.n, 1, 1], acc).expect("bias length")
    });

    Ok(ConvGrads { input: dx, weight: dw, bias: db })
}

struct Conv2d {
    geo: ConvGeometry,
    has_bias: bool,
}

impl<T: Float> Backward<T> for Conv2d {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let need_b = self.has_bias && ctx.needs[2];
        let grads = conv2d_backward(&ctx.inputs[0], &ctx.inputs[1], ctx.grad, self.geo, [ctx.needs[0], ctx.needs[1], need_b])
            .expect("shapes validated in forward");
        let mut out = vec![grads.input, grads.weight];
        if self.has_bias {
            let bshape = ctx.inputs[2].shape();
            out.push(grads.bias.map(|b| b.reshape(bshape).expect("bias numel")));
        }
        out
    }
}

/// Differentiable 2-D convolution with zero padding.
pub fn conv2d<'g, T: Float>(
    x: &Var<'g, T>,
    weight: &Var<'g, T>,
    bias: Option<&Var<'g, T>>,
    stride: usize,
    padding: usize,
) -> Result<Var<'g, T>> {
    let geo = ConvGeometry { stride, padding };
    let out = conv2d_forward(x.value(), weight.value(), bias.map(|b| b.value()), geo)?;
    let op = Box::new(Conv2d { geo, has_bias: bias.is_some() });
    match bias {
        Some(b) => x.graph().apply(op, &[x, weight, b], out),
        None => x.graph().apply(op, &[x, weight], out),
    }
}
