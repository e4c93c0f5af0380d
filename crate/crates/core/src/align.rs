//! Temporally deformable alignment: shared feature extraction, offset
//! conditioning, the deformable cascade and aligned-frame reconstruction.

use rand::Rng;
use tdan_tensor::ops::concat_channels;
use tdan_tensor::{Float, ParamStore, Scope, Var};

use crate::layers::{res_chain, Conv, DeformLayer, ResBlock};
use crate::{Error, Result};

/// Alignment sub-network parameters.
#[derive(Clone, Debug)]
pub struct AlignNet {
    pub conv0: Conv,
    pub res: Vec<ResBlock>,
    pub bottleneck: Conv,
    pub cascade: Vec<DeformLayer>,
    pub reconstruct: Conv,
}

/// Everything one supporting frame's alignment produces.
pub struct Alignment<'g, T: Float> {
    pub frame: Var<'g, T>,
    /// Offset field of every cascade layer, in order.
    pub offsets: Vec<Var<'g, T>>,
}

impl AlignNet {
    pub fn register<T: Float>(
        store: &mut ParamStore<T>,
        k1: usize,
        channels: usize,
        depth: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(2..=5).contains(&depth) {
            return Err(Error::Config(format!("deformable depth must be in [2, 5], got {depth}")));
        }
        let conv0 = Conv::same3(store, "tdan.feat.conv0", 3, channels, rng)?;
        let res = (0..k1)
            .map(|i| ResBlock::register(store, &format!("tdan.feat.res{i}"), channels, rng))
            .collect::<Result<_>>()?;
        let bottleneck = Conv::same3(store, "tdan.bottleneck", 2 * channels, channels, rng)?;
        let cascade = (0..depth)
            .map(|j| DeformLayer::register(store, &format!("tdan.dconv{j}"), channels, rng))
            .collect::<Result<_>>()?;
        let reconstruct = Conv::same3(store, "tdan.reconstruct", channels, 3, rng)?;
        Ok(Self { conv0, res, bottleneck, cascade, reconstruct })
    }

    /// conv3x3 (3 -> C) + ReLU, then the residual blocks. Shared by the
    /// reference and every supporting frame.
    pub fn extract_features<'g, T: Float>(&self, s: Scope<'g, T>, frame: &Var<'g, T>) -> Result<Var<'g, T>> {
        if frame.shape().c != 3 {
            return Err(Error::Data(format!("expected a 3-channel frame, got {}", frame.shape())));
        }
        let h = self.conv0.forward(s, frame)?.relu()?;
        res_chain(s, &h, &self.res)
    }

    /// Concatenates `[sup, ref]` and squeezes back to C channels; every
    /// cascade layer's offset conv reads this fused feature.
    pub fn predict_offsets<'g, T: Float>(
        &self,
        s: Scope<'g, T>,
        f_sup: &Var<'g, T>,
        f_ref: &Var<'g, T>,
    ) -> Result<Var<'g, T>> {
        if f_sup.shape() != f_ref.shape() {
            return Err(Error::Data(format!("feature pair mismatch: {} vs {}", f_sup.shape(), f_ref.shape())));
        }
        let pair = concat_channels(&[f_sup, f_ref])?;
        Ok(self.bottleneck.forward(s, &pair)?.relu()?)
    }

    /// Runs the cascade over the supporting stream, returning the aligned
    /// feature and each layer's offsets.
    pub fn align_features<'g, T: Float>(
        &self,
        s: Scope<'g, T>,
        f_sup: &Var<'g, T>,
        fused: &Var<'g, T>,
    ) -> Result<(Var<'g, T>, Vec<Var<'g, T>>)> {
        let mut h = f_sup.clone();
        let mut offsets = Vec::with_capacity(self.cascade.len());
        for (j, layer) in self.cascade.iter().enumerate() {
            let off = layer.offsets(s, fused)?;
            let (w, b) = (s.param(layer.weight), s.param(layer.bias));
            h = tdan_tensor::deform::deformable_conv2d(&h, &off, &w, Some(&b))?;
            if j + 1 < self.cascade.len() {
                h = h.relu()?;
            }
            offsets.push(off);
        }
        Ok((h, offsets))
    }

    /// Single conv back to RGB, no activation.
    pub fn reconstruct_aligned_frame<'g, T: Float>(&self, s: Scope<'g, T>, feature: &Var<'g, T>) -> Result<Var<'g, T>> {
        self.reconstruct.forward(s, feature)
    }

    /// Aligns one supporting frame to the reference.
    pub fn forward<'g, T: Float>(&self, s: Scope<'g, T>, reference: &Var<'g, T>, support: &Var<'g, T>) -> Result<Var<'g, T>> {
        let f_ref = self.extract_features(s, reference)?;
        Ok(self.align_with(s, &f_ref, support)?.frame)
    }

    /// Aligns a supporting frame given the already extracted reference feature.
    pub fn align_with<'g, T: Float>(&self, s: Scope<'g, T>, f_ref: &Var<'g, T>, support: &Var<'g, T>) -> Result<Alignment<'g, T>> {
        let f_sup = self.extract_features(s, support)?;
        let fused = self.predict_offsets(s, &f_sup, f_ref)?;
        let (aligned, offsets) = self.align_features(s, &f_sup, &fused)?;
        let frame = self.reconstruct_aligned_frame(s, &aligned)?;
        Ok(Alignment { frame, offsets })
    }
}
