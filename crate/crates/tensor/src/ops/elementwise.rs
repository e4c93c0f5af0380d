use crate::graph::{Backward, BackwardCtx};
use crate::{Float, Result, Tensor, Var};

struct Relu;

impl<T: Float> Backward<T> for Relu {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        // Subgradient at exactly zero is zero.
        let g = ctx.inputs[0]
            .zip_map(ctx.grad, |x, g| if x > T::zero() { g } else { T::zero() })
            .expect("relu grad shape");
        vec![Some(g)]
    }
}

struct Add;

impl<T: Float> Backward<T> for Add {
    fn name(&self) -> &'static str {
        "add"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let pass = |need: bool| need.then(|| ctx.grad.clone());
        vec![pass(ctx.needs[0]), pass(ctx.needs[1])]
    }
}

struct Scale(f64);

impl<T: Float> Backward<T> for Scale {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let k = T::from_f64(self.0);
        vec![Some(ctx.grad.map(|g| g * k))]
    }
}

struct Sum;

impl<T: Float> Backward<T> for Sum {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(Tensor::full(ctx.inputs[0].shape(), ctx.grad.item()))]
    }
}

struct Mean;

impl<T: Float> Backward<T> for Mean {
    fn name(&self) -> &'static str {
        "mean"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let n = T::from_f64(ctx.inputs[0].numel() as f64);
        vec![Some(Tensor::full(ctx.inputs[0].shape(), ctx.grad.item() / n))]
    }
}

/// Per-pixel weighting by a `(1, 1, 1, 1)` scalar variable.
struct MulScalar;

impl<T: Float> Backward<T> for MulScalar {
    fn name(&self) -> &'static str {
        "mul_scalar"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let (x, w) = (&ctx.inputs[0], ctx.inputs[1].item());
        let gx = ctx.needs[0].then(|| ctx.grad.map(|g| g * w));
        let gw = ctx.needs[1].then(|| {
            let s: T = x.data().iter().zip(ctx.grad.data()).map(|(&a, &g)| a * g).sum();
            Tensor::scalar(s)
        });
        vec![gx, gw]
    }
}

/// `sum(x * probe)` for a constant probe.
struct Dot<T>(Tensor<T>);

impl<T: Float> Backward<T> for Dot<T> {
    fn name(&self) -> &'static str {
        "dot"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let g = ctx.grad.item();
        vec![Some(self.0.map(|p| p * g))]
    }
}

impl<'g, T: Float> Var<'g, T> {
    /// Elementwise `max(0, x)`.
    pub fn relu(&self) -> Result<Var<'g, T>> {
        let out = self.value().map(|v| if v > T::zero() { v } else { T::zero() });
        self.graph().apply(Box::new(Relu), &[self], out)
    }

    pub fn add(&self, other: &Var<'g, T>) -> Result<Var<'g, T>> {
        let out = self.value().zip_map(other.value(), |a, b| a + b)?;
        self.graph().apply(Box::new(Add), &[self, other], out)
    }

    /// Multiplication by a constant.
    pub fn scale(&self, k: f64) -> Result<Var<'g, T>> {
        let kk = T::from_f64(k);
        let out = self.value().map(|v| v * kk);
        self.graph().apply(Box::new(Scale(k)), &[self], out)
    }

    /// Multiplication by a scalar-shaped variable.
    pub fn mul_scalar(&self, w: &Var<'g, T>) -> Result<Var<'g, T>> {
        if !w.shape().is_scalar() {
            return Err(crate::TensorError::ShapeMismatch {
                op: "mul_scalar",
                detail: format!("expected a scalar multiplier, got {}", w.shape()),
            });
        }
        let k = w.value().item();
        let out = self.value().map(|v| v * k);
        self.graph().apply(Box::new(MulScalar), &[self, w], out)
    }

    /// Sum of all elements as a `(1, 1, 1, 1)` tensor.
    pub fn sum(&self) -> Result<Var<'g, T>> {
        let out = Tensor::scalar(self.value().sum());
        self.graph().apply(Box::new(Sum), &[self], out)
    }

    /// Inner product with a constant tensor of the same shape.
    pub fn dot(&self, probe: &Tensor<T>) -> Result<Var<'g, T>> {
        let s: T = self.value().zip_map(probe, |a, b| a * b)?.sum();
        self.graph().apply(Box::new(Dot(probe.clone())), &[self], Tensor::scalar(s))
    }

    /// Mean of all elements as a `(1, 1, 1, 1)` tensor.
    pub fn mean(&self) -> Result<Var<'g, T>> {
        let out = Tensor::scalar(self.value().mean());
        self.graph().apply(Box::new(Mean), &[self], out)
    }
}
