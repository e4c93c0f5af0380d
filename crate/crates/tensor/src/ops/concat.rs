use crate::graph::{Backward, BackwardCtx};
use crate::{Float, Result, Shape, Tensor, TensorError, Var};

struct ConcatChannels {
    channels: Vec<usize>,
}

impl<T: Float> Backward<T> for ConcatChannels {
    fn name(&self) -> &'static str {
        "concat_channels"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let gs = ctx.grad.shape();
        let plane = gs.plane();
        let mut start = 0;
        let mut out = Vec::with_capacity(self.channels.len());
        for (i, &c) in self.channels.iter().enumerate() {
            if ctx.needs[i] {
                let mut g = Tensor::zeros(Shape::new(gs.n, c, gs.h, gs.w));
                for n in 0..gs.n {
                    let src = &ctx.grad.batch_item(n)[start * plane..(start + c) * plane];
                    g.batch_item_mut(n).copy_from_slice(src);
                }
                out.push(Some(g));
            } else {
                out.push(None);
            }
            start += c;
        }
        out
    }
}

/// Concatenates `(n, c_i, h, w)` tensors along channels, preserving input order.
pub fn concat_channels_forward<T: Float>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = xs.first().ok_or_else(|| TensorError::InvalidArgument {
        op: "concat_channels",
        detail: "no inputs".into(),
    })?;
    let s0 = first.shape();
    for t in xs {
        let s = t.shape();
        if (s.n, s.h, s.w) != (s0.n, s0.h, s0.w) {
            return Err(TensorError::ShapeMismatch {
                op: "concat_channels",
                detail: format!("{s} does not share batch/spatial dims with {s0}"),
            });
        }
    }
    let c_total = xs.iter().map(|t| t.shape().c).sum();
    let shape = Shape::new(s0.n, c_total, s0.h, s0.w);
    let mut data = Vec::with_capacity(shape.numel());
    for n in 0..s0.n {
        for t in xs {
            data.extend_from_slice(t.batch_item(n));
        }
    }
    Tensor::from_vec(shape, data)
}

pub fn concat_channels<'g, T: Float>(xs: &[&Var<'g, T>]) -> Result<Var<'g, T>> {
    let values: Vec<&Tensor<T>> = xs.iter().map(|v| v.value()).collect();
    let out = concat_channels_forward(&values)?;
    let op = ConcatChannels { channels: values.iter().map(|t| t.shape().c).collect() };
    xs[0].graph().apply(Box::new(op), xs, out)
}
