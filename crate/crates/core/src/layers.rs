//! Parameterized building blocks shared by every network.

use rand::Rng;
use tdan_tensor::deform::{deformable_conv2d, OFFSET_CHANNELS};
use tdan_tensor::ops::conv2d;
use tdan_tensor::{uniform_conv_weight, Float, ParamId, ParamStore, Scope, Tensor, Var};

use crate::Result;

/// How a layer's weights start out. Biases always start at zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// `U(-b, b)` with `b = sqrt(1 / fan_in)`.
    FanInUniform,
    Zero,
}

/// Square convolution with bias.
#[derive(Clone, Copy, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv {
    /// Registers `{name}.weight` and `{name}.bias`.
    pub fn register<T: Float>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = match init {
            Init::FanInUniform => uniform_conv_weight(c_out, c_in, kernel, kernel, rng),
            Init::Zero => Tensor::zeros([c_out, c_in, kernel, kernel]),
        };
        let weight = store.register(format!("{name}.weight"), w)?;
        let bias = store.register(format!("{name}.bias"), Tensor::zeros([c_out, 1, 1, 1]))?;
        Ok(Self { weight, bias, stride: 1, padding: kernel / 2 })
    }

    /// 3x3, stride 1, padding 1.
    pub fn same3<T: Float>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::register(store, name, c_in, c_out, 3, Init::FanInUniform, rng)
    }

    pub fn forward<'g, T: Float>(&self, s: Scope<'g, T>, x: &Var<'g, T>) -> Result<Var<'g, T>> {
        let (w, b) = (s.param(self.weight), s.param(self.bias));
        Ok(conv2d(x, &w, Some(&b), self.stride, self.padding)?)
    }
}

/// conv3x3 -> ReLU -> conv3x3 -> add input. No normalization, no activation
/// after the addition.
#[derive(Clone, Copy, Debug)]
pub struct ResBlock {
    pub conv1: Conv,
    pub conv2: Conv,
}

impl ResBlock {
    pub fn register<T: Float>(store: &mut ParamStore<T>, name: &str, channels: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            conv1: Conv::same3(store, &format!("{name}.conv1"), channels, channels, rng)?,
            conv2: Conv::same3(store, &format!("{name}.conv2"), channels, channels, rng)?,
        })
    }

    pub fn forward<'g, T: Float>(&self, s: Scope<'g, T>, x: &Var<'g, T>) -> Result<Var<'g, T>> {
        residual_block(s, x, self)
    }
}

/// `x + conv2(relu(conv1(x)))`.
pub fn residual_block<'g, T: Float>(s: Scope<'g, T>, x: &Var<'g, T>, block: &ResBlock) -> Result<Var<'g, T>> {
    let c_in = s.params.value(block.conv1.weight).shape().c;
    if x.shape().c != c_in {
        return Err(crate::Error::Config(format!(
            "residual block expects {c_in} channels, input has {}",
            x.shape().c
        )));
    }
    let h = block.conv1.forward(s, x)?.relu()?;
    let h = block.conv2.forward(s, &h)?;
    Ok(h.add(x)?)
}

/// Applies blocks in order; an empty chain is the identity.
pub fn res_chain<'g, T: Float>(s: Scope<'g, T>, x: &Var<'g, T>, blocks: &[ResBlock]) -> Result<Var<'g, T>> {
    let mut h = x.clone();
    for b in blocks {
        h = b.forward(s, &h)?;
    }
    Ok(h)
}

/// A deformable 3x3 layer plus the conv that predicts its offset field from
/// a conditioning feature.
#[derive(Clone, Copy, Debug)]
pub struct DeformLayer {
    /// Conditioning feature -> 18-channel offset field; zero-initialized.
    pub offset: Conv,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl DeformLayer {
    pub fn register<T: Float>(store: &mut ParamStore<T>, name: &str, channels: usize, rng: &mut impl Rng) -> Result<Self> {
        let offset = Conv::register(store, &format!("{name}.offset"), channels, OFFSET_CHANNELS, 3, Init::Zero, rng)?;
        let weight = store.register(format!("{name}.weight"), uniform_conv_weight(channels, channels, 3, 3, rng))?;
        let bias = store.register(format!("{name}.bias"), Tensor::zeros([channels, 1, 1, 1]))?;
        Ok(Self { offset, weight, bias })
    }

    /// Offset field predicted from `condition`.
    pub fn offsets<'g, T: Float>(&self, s: Scope<'g, T>, condition: &Var<'g, T>) -> Result<Var<'g, T>> {
        self.offset.forward(s, condition)
    }

    pub fn forward<'g, T: Float>(&self, s: Scope<'g, T>, x: &Var<'g, T>, condition: &Var<'g, T>) -> Result<Var<'g, T>> {
        let off = self.offsets(s, condition)?;
        let (w, b) = (s.param(self.weight), s.param(self.bias));
        Ok(deformable_conv2d(x, &off, &w, Some(&b))?)
    }
}
