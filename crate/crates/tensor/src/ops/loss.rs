use crate::graph::{Backward, BackwardCtx};
use crate::{Float, Result, Tensor, TensorError, Var};

/// Mean absolute error between two equally shaped tensors.
struct L1;

fn sign<T: Float>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

impl<T: Float> Backward<T> for L1 {
    fn name(&self) -> &'static str {
        "l1_loss"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let (a, b) = (&ctx.inputs[0], &ctx.inputs[1]);
        let k = ctx.grad.item() / T::from_f64(a.numel() as f64);
        let ga = a.zip_map(b, |x, y| sign(x - y) * k).expect("l1 shapes");
        let gb = ctx.needs[1].then(|| ga.map(|v| -v));
        vec![ctx.needs[0].then_some(ga), gb]
    }
}

/// `mean(|a - b|)` as a `(1, 1, 1, 1)` tensor; subgradient 0 at equality.
pub fn l1_loss<'g, T: Float>(a: &Var<'g, T>, b: &Var<'g, T>) -> Result<Var<'g, T>> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch { op: "l1_loss", detail: format!("{} vs {}", a.shape(), b.shape()) });
    }
    let n = a.value().numel() as f64;
    let s: f64 = a.value().data().iter().zip(b.value().data()).map(|(&x, &y)| (x - y).abs().to_f64()).sum();
    a.graph().apply(Box::new(L1), &[a, b], Tensor::scalar(T::from_f64(s / n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;

    #[test]
    fn gradient_is_scaled_sign() {
        let g = Graph::<f64>::new();
        let a = g.variable(Tensor::from_vec([1, 1, 1, 4], vec![1.0, 0.0, -1.0, 0.5]).unwrap());
        let b = g.constant(Tensor::from_vec([1, 1, 1, 4], vec![0.0, 0.0, 0.0, 1.0]).unwrap());
        let loss = l1_loss(&a, &b).unwrap();
        assert_eq!(loss.value().item(), (1.0 + 0.0 + 1.0 + 0.5) / 4.0);
        let grads = g.backward(&loss).unwrap();
        assert_eq!(grads.wrt(&a).data(), &[0.25, 0.0, -0.25, -0.25]);
    }
}
