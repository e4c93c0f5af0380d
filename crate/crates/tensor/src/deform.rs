//! Deformable 2-D convolution.
//!
//! For every output position `p0` and kernel tap `p_n` the input feature is
//! read at the displaced position `p0 + p_n + dp_n(p0)` through zero-padded
//! bilinear interpolation, then weighted exactly like a regular convolution:
//!
//! ```text
//! y(p0) = b + sum_n w(p_n) * x(p0 + p_n + dp_n(p0))
//! ```
//!
//! Offsets come as an `(N, 2 * 9, H, W)` field; channel `2n` is the horizontal
//! and `2n + 1` the vertical displacement of tap `n`, with taps enumerated
//! row-major over `(dy, dx) in {-1, 0, 1}^2`. One offset field is shared by all
//! input channels. The kernel is fixed at 3x3, stride 1, padding 1, so the
//! output grid equals the input grid.

use rayon::prelude::*;

use crate::float::{gemm, Mat};
use crate::graph::{Backward, BackwardCtx};
use crate::{Float, Result, Shape, Tensor, TensorError, Var};

/// Kernel side length of every deformable layer.
pub const KERNEL: usize = 3;
/// Number of taps in the sampling grid.
pub const TAPS: usize = KERNEL * KERNEL;
/// Channels of an offset field.
pub const OFFSET_CHANNELS: usize = 2 * TAPS;

/// Regular-grid displacement `(dy, dx)` of tap `n`.
pub const fn tap_grid(n: usize) -> (isize, isize) {
    ((n / KERNEL) as isize - 1, (n % KERNEL) as isize - 1)
}

/// Corner indices and weights of one bilinear read at fractional `(x, y)`.
///
/// Corners are ordered `(y0, x0), (y0, x1), (y1, x0), (y1, x1)` with
/// `x0 = floor(x)`. A corner outside the `h x w` plane reads as zero, which the
/// `valid` mask records.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearSample {
    pub x: f64,
    pub y: f64,
    pub corners: [(isize, isize); 4],
    pub weights: [f64; 4],
    pub valid: [bool; 4],
}

impl BilinearSample {
    pub fn new(x: f64, y: f64, h: usize, w: usize) -> Self {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let corners = [(y0, x0), (y0, x0 + 1), (y0 + 1, x0), (y0 + 1, x0 + 1)];
        let weights = [(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx];
        let valid = corners.map(|(cy, cx)| cy >= 0 && cx >= 0 && (cy as usize) < h && (cx as usize) < w);
        Self { x, y, corners, weights, valid }
    }

    /// Interpolated value over a row-major `h x w` plane.
    pub fn eval<T: Float>(&self, plane: &[T], w: usize) -> f64 {
        (0..4)
            .filter(|&k| self.valid[k])
            .map(|k| {
                let (cy, cx) = self.corners[k];
                self.weights[k] * plane[cy as usize * w + cx as usize].to_f64()
            })
            .sum()
    }
}

/// Zero-padded bilinear read of `feature[n, c]` at fractional pixel `(x, y)`.
pub fn bilinear_sample<T: Float>(feature: &Tensor<T>, x: f64, y: f64, n: usize, c: usize) -> f64 {
    let s = feature.shape();
    BilinearSample::new(x, y, s.h, s.w).eval(feature.plane(n, c), s.w)
}

/// Precomputed bilinear read used inside the kernels. Invalid corners have
/// zero weight and point at index 0.
#[derive(Clone, Copy)]
struct Tap<T> {
    idx: [u32; 4],
    w: [T; 4],
}

#[derive(Clone, Copy)]
struct TapGrad<T> {
    idx: [u32; 4],
    w: [T; 4],
    dx: [T; 4],
    dy: [T; 4],
}

#[inline]
fn corner_layout<T: Float>(sx: T, sy: T, h: usize, w: usize) -> ([u32; 4], [bool; 4], T, T) {
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let (x0, y0) = (x0.to_f64() as i64, y0.to_f64() as i64);
    let mut idx = [0u32; 4];
    let mut ok = [false; 4];
    for (k, (cy, cx)) in [(y0, x0), (y0, x0 + 1), (y0 + 1, x0), (y0 + 1, x0 + 1)].into_iter().enumerate() {
        if cy >= 0 && cx >= 0 && (cy as usize) < h && (cx as usize) < w {
            ok[k] = true;
            idx[k] = (cy as usize * w + cx as usize) as u32;
        }
    }
    (idx, ok, fx, fy)
}

/// Absolute sampling position of tap `k` for output pixel `(y0, x0)`.
#[inline]
fn sample_pos<T: Float>(off: &[T], plane: usize, k: usize, p: usize, y0: usize, x0: usize) -> (T, T) {
    let (gy, gx) = tap_grid(k);
    let sx = T::from_f64((x0 as isize + gx) as f64) + off[(2 * k) * plane + p];
    let sy = T::from_f64((y0 as isize + gy) as f64) + off[(2 * k + 1) * plane + p];
    (sx, sy)
}

fn taps<T: Float>(off: &[T], h: usize, w: usize) -> Vec<Tap<T>> {
    let plane = h * w;
    let mut out = Vec::with_capacity(TAPS * plane);
    let one = T::one();
    for k in 0..TAPS {
        for y0 in 0..h {
            for x0 in 0..w {
                let p = y0 * w + x0;
                let (sx, sy) = sample_pos(off, plane, k, p, y0, x0);
                let (idx, ok, fx, fy) = corner_layout(sx, sy, h, w);
                let mut wts = [(one - fy) * (one - fx), (one - fy) * fx, fy * (one - fx), fy * fx];
                for c in 0..4 {
                    if !ok[c] {
                        wts[c] = T::zero();
                    }
                }
                out.push(Tap { idx, w: wts });
            }
        }
    }
    out
}

fn tap_grads<T: Float>(off: &[T], h: usize, w: usize) -> Vec<TapGrad<T>> {
    let plane = h * w;
    let mut out = Vec::with_capacity(TAPS * plane);
    let one = T::one();
    let z = T::zero();
    for k in 0..TAPS {
        for y0 in 0..h {
            for x0 in 0..w {
                let p = y0 * w + x0;
                let (sx, sy) = sample_pos(off, plane, k, p, y0, x0);
                let (idx, ok, fx, fy) = corner_layout(sx, sy, h, w);
                let mut t = TapGrad {
                    idx,
                    w: [(one - fy) * (one - fx), (one - fy) * fx, fy * (one - fx), fy * fx],
                    dx: [-(one - fy), one - fy, -fy, fy],
                    dy: [-(one - fx), -fx, one - fx, fx],
                };
                for c in 0..4 {
                    if !ok[c] {
                        t.w[c] = z;
                        t.dx[c] = z;
                        t.dy[c] = z;
                    }
                }
                out.push(t);
            }
        }
    }
    out
}

/// Bilinear column buffer `(c * 9, h * w)` for one batch item.
fn deform_columns<T: Float>(x: &[T], c: usize, plane: usize, taps: &[Tap<T>], col: &mut [T]) {
    for ci in 0..c {
        let src = &x[ci * plane..(ci + 1) * plane];
        for k in 0..TAPS {
            let row = &mut col[(ci * TAPS + k) * plane..(ci * TAPS + k + 1) * plane];
            let tk = &taps[k * plane..(k + 1) * plane];
            for (dst, t) in row.iter_mut().zip(tk) {
                *dst = t.w[0] * src[t.idx[0] as usize]
                    + t.w[1] * src[t.idx[1] as usize]
                    + t.w[2] * src[t.idx[2] as usize]
                    + t.w[3] * src[t.idx[3] as usize];
            }
        }
    }
}

fn validate<T: Float>(x: &Tensor<T>, offsets: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<()> {
    const OP: &str = "deformable_conv2d";
    let (xs, os, ws) = (x.shape(), offsets.shape(), weight.shape());
    if ws.h != KERNEL || ws.w != KERNEL {
        return Err(TensorError::InvalidArgument { op: OP, detail: format!("kernel must be 3x3, got {}x{}", ws.h, ws.w) });
    }
    if ws.c != xs.c {
        return Err(TensorError::ShapeMismatch {
            op: OP,
            detail: format!("input has {} channels but weight {ws} expects {}", xs.c, ws.c),
        });
    }
    if os.c != OFFSET_CHANNELS {
        return Err(TensorError::ShapeMismatch {
            op: OP,
            detail: format!("offset field has {} channels, expected {OFFSET_CHANNELS} (2 per tap)", os.c),
        });
    }
    if (os.n, os.h, os.w) != (xs.n, xs.h, xs.w) {
        return Err(TensorError::ShapeMismatch { op: OP, detail: format!("offset field {os} does not cover input {xs}") });
    }
    if let Some(b) = bias {
        if b.numel() != ws.n {
            return Err(TensorError::ShapeMismatch { op: OP, detail: format!("bias has {} elements, expected {}", b.numel(), ws.n) });
        }
    }
    Ok(())
}

/// Forward pass; output is `(N, c_out, H, W)`.
pub fn deformable_conv2d_forward<T: Float>(
    x: &Tensor<T>,
    offsets: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    validate(x, offsets, weight, bias)?;
    let (xs, ws) = (x.shape(), weight.shape());
    let plane = xs.plane();
    let out_shape = Shape::new(xs.n, ws.n, xs.h, xs.w);
    let mut out = Tensor::zeros(out_shape);
    let wmat = Mat::new(weight.data(), ws.n, xs.c * TAPS);
    out.data_mut().par_chunks_mut(out_shape.item().max(1)).enumerate().for_each(|(n, out_n)| {
        let taps = taps(offsets.batch_item(n), xs.h, xs.w);
        let mut col = vec![T::zero(); xs.c * TAPS * plane];
        deform_columns(x.batch_item(n), xs.c, plane, &taps, &mut col);
        if let Some(b) = bias {
            for (co, row) in out_n.chunks_mut(plane).enumerate() {
                row.fill(b.data()[co]);
            }
        }
        gemm(wmat, Mat::new(&col, xs.c * TAPS, plane), T::one(), out_n);
    });
    Ok(out)
}

/// Gradients of a deformable convolution; `None` where not requested.
pub struct DeformGrads<T> {
    pub input: Option<Tensor<T>>,
    pub offsets: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

struct ItemGrads<T> {
    dx: Vec<T>,
    doff: Vec<T>,
    dw: Vec<T>,
}

/// Backward pass. `needs` is ordered `[input, offsets, weight, bias]`.
pub fn deformable_conv2d_backward<T: Float>(
    x: &Tensor<T>,
    offsets: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    needs: [bool; 4],
) -> Result<DeformGrads<T>> {
    validate(x, offsets, weight, None)?;
    let (xs, ws) = (x.shape(), weight.shape());
    if grad_out.shape() != Shape::new(xs.n, ws.n, xs.h, xs.w) {
        return Err(TensorError::ShapeMismatch {
            op: "deformable_conv2d_backward",
            detail: format!("upstream gradient {}", grad_out.shape()),
        });
    }
    let [need_x, need_off, need_w, need_b] = needs;
    let plane = xs.plane();
    let rows = xs.c * TAPS;
    let wmat = Mat::new(weight.data(), ws.n, rows);

    let items: Vec<ItemGrads<T>> = (0..xs.n)
        .into_par_iter()
        .map(|n| {
            let xn = x.batch_item(n);
            let go = Mat::new(grad_out.batch_item(n), ws.n, plane);
            let tg = tap_grads(offsets.batch_item(n), xs.h, xs.w);
            let mut dw = Vec::new();
            if need_w {
                let taps: Vec<Tap<T>> = tg.iter().map(|t| Tap { idx: t.idx, w: t.w }).collect();
                let mut col = vec![T::zero(); rows * plane];
                deform_columns(xn, xs.c, plane, &taps, &mut col);
                dw = vec![T::zero(); ws.numel()];
                gemm(go, Mat::new(&col, rows, plane).t(), T::zero(), &mut dw);
            }
            let mut dx = Vec::new();
            let mut doff = Vec::new();
            if need_x || need_off {
                let mut dcol = vec![T::zero(); rows * plane];
                gemm(wmat.t(), go, T::zero(), &mut dcol);
                if need_x {
                    dx = vec![T::zero(); xs.item()];
                }
                if need_off {
                    doff = vec![T::zero(); OFFSET_CHANNELS * plane];
                }
                for ci in 0..xs.c {
                    let src = &xn[ci * plane..(ci + 1) * plane];
                    for k in 0..TAPS {
                        let g_row = &dcol[(ci * TAPS + k) * plane..(ci * TAPS + k + 1) * plane];
                        let tk = &tg[k * plane..(k + 1) * plane];
                        if need_x {
                            let dst = &mut dx[ci * plane..(ci + 1) * plane];
                            for (&g, t) in g_row.iter().zip(tk) {
                                for j in 0..4 {
                                    dst[t.idx[j] as usize] += t.w[j] * g;
                                }
                            }
                        }
                        if need_off {
                            let (ox, oy) = doff[2 * k * plane..(2 * k + 2) * plane].split_at_mut(plane);
                            for (p, (&g, t)) in g_row.iter().zip(tk).enumerate() {
                                let v = [
                                    src[t.idx[0] as usize],
                                    src[t.idx[1] as usize],
                                    src[t.idx[2] as usize],
                                    src[t.idx[3] as usize],
                                ];
                                let gx = t.dx[0] * v[0] + t.dx[1] * v[1] + t.dx[2] * v[2] + t.dx[3] * v[3];
                                let gy = t.dy[0] * v[0] + t.dy[1] * v[1] + t.dy[2] * v[2] + t.dy[3] * v[3];
                                ox[p] += g * gx;
                                oy[p] += g * gy;
                            }
                        }
                    }
                }
            }
            ItemGrads { dx, doff, dw }
        })
        .collect();

    let input = need_x.then(|| {
        let data = items.iter().flat_map(|it| it.dx.iter().copied()).collect();
        Tensor::from_vec(xs, data).expect("dx length")
    });
    let offsets_grad = need_off.then(|| {
        let data = items.iter().flat_map(|it| it.doff.iter().copied()).collect();
        Tensor::from_vec(offsets.shape(), data).expect("doff length")
    });
    let weight_grad = need_w.then(|| {
        let mut acc = Tensor::zeros(ws);
        for it in &items {
            for (a, &v) in acc.data_mut().iter_mut().zip(&it.dw) {
                *a += v;
            }
        }
        acc
    });
    let bias = need_b.then(|| {
        let mut acc = vec![T::zero(); ws.n];
        for n in 0..xs.n {
            for (co, row) in grad_out.batch_item(n).chunks(plane).enumerate() {
                acc[co] += row.iter().copied().sum::<T>();
            }
        }
        Tensor::from_vec([1, ws.n, 1, 1], acc).expect("bias length")
    });
    Ok(DeformGrads { input, offsets: offsets_grad, weight: weight_grad, bias })
}

struct DeformableConv2d {
    has_bias: bool,
}

impl<T: Float> Backward<T> for DeformableConv2d {
    fn name(&self) -> &'static str {
        "deformable_conv2d"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let need_b = self.has_bias && ctx.needs[3];
        let g = deformable_conv2d_backward(
            &ctx.inputs[0],
            &ctx.inputs[1],
            &ctx.inputs[2],
            ctx.grad,
            [ctx.needs[0], ctx.needs[1], ctx.needs[2], need_b],
        )
        .expect("shapes validated in forward");
        let mut out = vec![g.input, g.offsets, g.weight];
        if self.has_bias {
            let bshape = ctx.inputs[3].shape();
            out.push(g.bias.map(|b| b.reshape(bshape).expect("bias numel")));
        }
        out
    }
}

/// Differentiable deformable convolution (3x3, stride 1, padding 1).
pub fn deformable_conv2d<'g, T: Float>(
    x: &Var<'g, T>,
    offsets: &Var<'g, T>,
    weight: &Var<'g, T>,
    bias: Option<&Var<'g, T>>,
) -> Result<Var<'g, T>> {
    let out = deformable_conv2d_forward(x.value(), offsets.value(), weight.value(), bias.map(|b| b.value()))?;
    let op = Box::new(DeformableConv2d { has_bias: bias.is_some() });
    match bias {
        Some(b) => x.graph().apply(op, &[x, offsets, weight, b], out),
        None => x.graph().apply(op, &[x, offsets, weight], out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{conv2d_forward, ConvGeometry};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn bilinear_integer_coordinates_hit_pixels() {
        let f = Tensor::<f64>::from_fn([1, 1, 3, 4], |_, _, h, w| (h * 4 + w) as f64);
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(bilinear_sample(&f, x as f64, y as f64, 0, 0), (y * 4 + x) as f64);
            }
        }
    }

    #[test]
    fn bilinear_center_of_patch_is_mean() {
        let f = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(bilinear_sample(&f, 0.5, 0.5, 0, 0), 1.5);
    }

    #[test]
    fn bilinear_far_outside_is_zero() {
        let f = Tensor::<f64>::ones([1, 1, 4, 4]);
        assert_eq!(bilinear_sample(&f, -5.0, -5.0, 0, 0), 0.0);
        // Half a pixel past the border: half the weight lands on padding.
        assert!((bilinear_sample(&f, -0.5, 1.0, 0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_offsets_reduce_to_regular_convolution() {
        let mut r = rng(1);
        let x = Tensor::<f32>::random_uniform([2, 5, 7, 6], -1.0, 1.0, &mut r);
        let w = Tensor::<f32>::random_uniform([4, 5, 3, 3], -1.0, 1.0, &mut r);
        let b = Tensor::<f32>::random_uniform([4, 1, 1, 1], -1.0, 1.0, &mut r);
        let off = Tensor::<f32>::zeros([2, 18, 7, 6]);
        let d = deformable_conv2d_forward(&x, &off, &w, Some(&b)).unwrap();
        let c = conv2d_forward(&x, &w, Some(&b), ConvGeometry::SAME_3X3).unwrap();
        assert!(d.max_abs_diff(&c) < 1e-6);
    }

    #[test]
    fn horizontal_shift_on_horizontally_constant_image() {
        let mut r = rng(2);
        // Constant along x; rows differ. Interior columns see no change under a
        // unit horizontal shift because the sampled row values are identical.
        let x = Tensor::<f64>::from_fn([1, 2, 6, 8], |_, c, h, _| (c * 10 + h) as f64 * 0.1);
        let w = Tensor::<f64>::random_uniform([3, 2, 3, 3], -1.0, 1.0, &mut r);
        let zero = Tensor::<f64>::zeros([1, 18, 6, 8]);
        let shifted = Tensor::<f64>::from_fn([1, 18, 6, 8], |_, c, _, _| if c % 2 == 0 { 1.0 } else { 0.0 });
        let a = deformable_conv2d_forward(&x, &zero, &w, None).unwrap();
        let b = deformable_conv2d_forward(&x, &shifted, &w, None).unwrap();
        for co in 0..3 {
            for h in 0..6 {
                for wx in 1..6 {
                    assert!((a.get(0, co, h, wx) - b.get(0, co, h, wx)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_offset_channels_and_spatial_mismatch() {
        let x = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let w = Tensor::<f32>::zeros([2, 2, 3, 3]);
        let e = deformable_conv2d_forward(&x, &Tensor::zeros([1, 9, 4, 4]), &w, None).unwrap_err();
        assert!(e.to_string().contains("expected 18"), "{e}");
        assert!(deformable_conv2d_forward(&x, &Tensor::zeros([1, 18, 4, 5]), &w, None).is_err());
        assert!(deformable_conv2d_forward(&x, &Tensor::zeros([1, 18, 4, 4]), &Tensor::zeros([2, 2, 5, 5]), None).is_err());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut r = rng(3);
        let x = Tensor::<f64>::random_uniform([1, 2, 5, 5], -1.0, 1.0, &mut r);
        let off = Tensor::<f64>::random_uniform([1, 18, 5, 5], -1.5, 1.5, &mut r);
        let w = Tensor::<f64>::random_uniform([3, 2, 3, 3], -1.0, 1.0, &mut r);
        let g = deformable_conv2d_backward(&x, &off, &w, &Tensor::zeros([1, 3, 5, 5]), [true; 4]).unwrap();
        for t in [g.input, g.offsets, g.weight, g.bias] {
            assert!(t.unwrap().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_weights_give_zero_offset_gradient() {
        let mut r = rng(4);
        let x = Tensor::<f64>::random_uniform([1, 2, 5, 5], -1.0, 1.0, &mut r);
        let off = Tensor::<f64>::random_uniform([1, 18, 5, 5], -1.5, 1.5, &mut r);
        let w = Tensor::<f64>::zeros([3, 2, 3, 3]);
        let go = Tensor::<f64>::random_uniform([1, 3, 5, 5], -1.0, 1.0, &mut r);
        let g = deformable_conv2d_backward(&x, &off, &w, &go, [true; 4]).unwrap();
        assert!(g.offsets.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn locality_on_zero_offsets() {
        let mut r = rng(5);
        let x = Tensor::<f64>::random_uniform([1, 1, 7, 7], -1.0, 1.0, &mut r);
        let w = Tensor::<f64>::random_uniform([1, 1, 3, 3], 0.1, 1.0, &mut r);
        let off = Tensor::<f64>::zeros([1, 18, 7, 7]);
        let base = deformable_conv2d_forward(&x, &off, &w, None).unwrap();
        let mut bumped = x.clone();
        bumped.set(0, 0, 3, 2, x.get(0, 0, 3, 2) + 1.0);
        let moved = deformable_conv2d_forward(&bumped, &off, &w, None).unwrap();
        for h in 0..7 {
            for wx in 0..7 {
                let changed = (base.get(0, 0, h, wx) - moved.get(0, 0, h, wx)).abs() > 0.0;
                let in_footprint = (h as isize - 3).abs() <= 1 && (wx as isize - 2).abs() <= 1;
                assert_eq!(changed, in_footprint, "pixel ({h}, {wx})");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn averaging_output_is_bounded(seed in any::<u64>(), spread in 0.0f64..4.0) {
            let mut r = rng(seed);
            let x = Tensor::<f64>::random_uniform([1, 1, 6, 5], -2.0, 3.0, &mut r);
            let off = Tensor::<f64>::random_uniform([1, 18, 6, 5], -spread, spread, &mut r);
            let w = Tensor::<f64>::full([1, 1, 3, 3], 1.0 / 9.0);
            let y = deformable_conv2d_forward(&x, &off, &w, None).unwrap();
            let lo = x.data().iter().copied().fold(0.0, f64::min);
            let hi = x.data().iter().copied().fold(0.0, f64::max);
            for &v in y.data() {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }

        #[test]
        fn bilinear_weights_partition_unity_inside(x in 0.0f64..6.0, y in 0.0f64..4.0) {
            let s = BilinearSample::new(x, y, 5, 7);
            prop_assert!(s.weights.iter().all(|&w| (0.0..=1.0).contains(&w)));
            prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
