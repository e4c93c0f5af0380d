use tdan_tensor::{Float, ParamStore, Tensor};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam with one moment pair per registered parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T: Float> {
    pub config: AdamConfig,
    /// Updates applied so far.
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Float> Adam<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, p)| Tensor::zeros(p.shape())).collect::<Vec<_>>();
        Self { config, step: 0, m: zeros(), v: zeros() }
    }

    /// Applies one update from the gradients stored in `params`. Nothing is
    /// modified if any gradient is missing or non-finite.
    pub fn step(&mut self, params: &mut ParamStore<T>, lr: f64) -> Result<()> {
        if self.m.len() != params.len() {
            return Err(Error::Numeric(format!("optimizer tracks {} parameters, model has {}", self.m.len(), params.len())));
        }
        for (_, p) in params.iter() {
            let g = p.grad().ok_or_else(|| Error::Numeric(format!("parameter `{}` has no gradient", p.name())))?;
            if let Some(i) = g.first_non_finite() {
                return Err(Error::Numeric(format!("non-finite gradient in parameter `{}` at element {i}", p.name())));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
        let (nb1, nb2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
        let (c1, c2, eps, lr) = (T::from_f64(c1), T::from_f64(c2), T::from_f64(eps), T::from_f64(lr));
        let ids: Vec<_> = params.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let g = params.grad(id).expect("checked above").clone();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let w = params.value_mut(id);
            for (((w, m), v), &g) in w.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data()) {
                *m = b1 * *m + nb1 * g;
                *v = b2 * *v + nb2 * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Float>(params: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = params.iter().filter_map(|(_, p)| p.grad()).map(|g| g.sq_norm().to_f64()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = T::from_f64(max_norm / norm);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            if let Some(mut g) = params.grad(id).cloned() {
                g.scale_inplace(k);
                params.set_grad(id, g);
            }
        }
    }
    norm
}
