use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::{Float, Result, Shape, Tensor, TensorError};

/// Handle to a parameter inside a [`ParamStore`]. Ids follow registration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// A trainable tensor registered under a unique dotted path.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<T: Float> {
    name: String,
    value: Arc<Tensor<T>>,
    grad: Option<Tensor<T>>,
}

impl<T: Float> ParamTensor<T> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn grad(&self) -> Option<&Tensor<T>> {
        self.grad.as_ref()
    }

    pub fn shape(&self) -> Shape {
        self.value.shape()
    }
}

/// Ordered registry of every trainable parameter of a model.
///
/// Registration order is the iteration order, which makes checkpoints and
/// optimizer state layouts deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T: Float> {
    params: Vec<ParamTensor<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new(), by_name: HashMap::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(TensorError::DuplicateParam(name));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(ParamTensor { name, value: Arc::new(value), grad: None });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor<T> {
        &self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Result<&ParamTensor<T>> {
        self.id(name).map(|id| self.get(id)).ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub(crate) fn value_arc(&self, id: ParamId) -> Arc<Tensor<T>> {
        Arc::clone(&self.params[id.0].value)
    }

    /// Mutable access to a parameter value. Clones the buffer only if a live
    /// graph still holds a reference to it.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.params[id.0].value)
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params[id.0].grad.as_ref()
    }

    pub fn set_grad(&mut self, id: ParamId, grad: Tensor<T>) {
        assert_eq!(grad.shape(), self.params[id.0].value.shape(), "gradient shape mismatch for {}", self.params[id.0].name);
        self.params[id.0].grad = Some(grad);
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamTensor<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Same registry in another precision; gradients are dropped.
    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| ParamTensor { name: p.name.clone(), value: Arc::new(p.value.cast()), grad: None })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

/// Bound of the fan-in scaled uniform initializer: `sqrt(1 / (c_in * kh * kw))`.
pub fn fan_in_bound(c_in: usize, kh: usize, kw: usize) -> f64 {
    (1.0 / (c_in * kh * kw) as f64).sqrt()
}

/// Conv weight `(c_out, c_in, kh, kw)` drawn from `U(-b, b)` with `b = fan_in_bound(..)`.
pub fn uniform_conv_weight<T: Float>(c_out: usize, c_in: usize, kh: usize, kw: usize, rng: &mut impl Rng) -> Tensor<T> {
    let b = fan_in_bound(c_in, kh, kw);
    let data = (0..c_out * c_in * kh * kw).map(|_| T::from_f64(rng.gen_range(-b..b))).collect();
    Tensor::from_vec([c_out, c_in, kh, kw], data).expect("length matches by construction")
}
