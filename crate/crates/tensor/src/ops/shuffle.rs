use crate::graph::{Backward, BackwardCtx};
use crate::{Float, Result, Shape, Tensor, TensorError, Var};

/// Sub-pixel rearrangement: `out(n, c, h*r + i, w*r + j) = in(n, c*r*r + i*r + j, h, w)`.
pub fn pixel_shuffle_forward<T: Float>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || s.c % (r * r) != 0 {
        return Err(TensorError::InvalidArgument {
            op: "pixel_shuffle",
            detail: format!("{} channels not divisible by r^2 = {}", s.c, r * r),
        });
    }
    let oc = s.c / (r * r);
    let os = Shape::new(s.n, oc, s.h * r, s.w * r);
    let mut out = Tensor::zeros(os);
    let od = out.data_mut();
    for n in 0..s.n {
        for c in 0..oc {
            for i in 0..r {
                for j in 0..r {
                    let src = x.plane(n, c * r * r + i * r + j);
                    for h in 0..s.h {
                        let row = os.offset(n, c, h * r + i, 0);
                        for w in 0..s.w {
                            od[row + w * r + j] = src[h * s.w + w];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_shuffle_forward`].
pub fn pixel_unshuffle_forward<T: Float>(y: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = y.shape();
    if r == 0 || s.h % r != 0 || s.w % r != 0 {
        return Err(TensorError::InvalidArgument {
            op: "pixel_unshuffle",
            detail: format!("spatial dims {}x{} not divisible by {r}", s.h, s.w),
        });
    }
    let is = Shape::new(s.n, s.c * r * r, s.h / r, s.w / r);
    let mut out = Tensor::zeros(is);
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..r {
                for j in 0..r {
                    for h in 0..is.h {
                        for w in 0..is.w {
                            let v = y.get(n, c, h * r + i, w * r + j);
                            out.set(n, c * r * r + i * r + j, h, w, v);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

struct PixelShuffle(usize);

impl<T: Float> Backward<T> for PixelShuffle {
    fn name(&self) -> &'static str {
        "pixel_shuffle"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(pixel_unshuffle_forward(ctx.grad, self.0).expect("grad shaped like output"))]
    }
}

pub fn pixel_shuffle<'g, T: Float>(x: &Var<'g, T>, r: usize) -> Result<Var<'g, T>> {
    let out = pixel_shuffle_forward(x.value(), r)?;
    x.graph().apply(Box::new(PixelShuffle(r)), &[x], out)
}
