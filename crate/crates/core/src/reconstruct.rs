//! Super-resolution reconstruction: temporal fusion, residual mapping and
//! sub-pixel upscaling.

use rand::Rng;
use tdan_tensor::ops::{concat_channels, pixel_shuffle};
use tdan_tensor::{Float, ParamStore, Scope, Var};

use crate::layers::{res_chain, Conv, ResBlock};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct SrNet {
    pub frames: usize,
    pub fusion: Conv,
    pub body: Vec<ResBlock>,
    /// One conv (C -> 4C) per x2 stage.
    pub upsample: Vec<Conv>,
    pub output: Conv,
}

impl SrNet {
    pub fn register<T: Float>(
        store: &mut ParamStore<T>,
        frames: usize,
        k2: usize,
        channels: usize,
        scale: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if scale != 2 && scale != 4 {
            return Err(Error::Config(format!("scale must be 2 or 4, got {scale}")));
        }
        let fusion = Conv::same3(store, "sr.fusion", 3 * frames, channels, rng)?;
        let body = (0..k2)
            .map(|i| ResBlock::register(store, &format!("sr.res{i}"), channels, rng))
            .collect::<Result<_>>()?;
        let upsample = (0..scale.trailing_zeros())
            .map(|j| Conv::same3(store, &format!("sr.up{j}"), channels, 4 * channels, rng))
            .collect::<Result<_>>()?;
        let output = Conv::same3(store, "sr.output", channels, 3, rng)?;
        Ok(Self { frames, fusion, body, upsample, output })
    }

    /// Concatenates the frames in the given order and applies conv + ReLU.
    pub fn fuse_temporal<'g, T: Float>(&self, s: Scope<'g, T>, frames: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        if frames.len() != self.frames {
            return Err(Error::Data(format!("fusion expects {} frames, got {}", self.frames, frames.len())));
        }
        let refs: Vec<&Var<'g, T>> = frames.iter().collect();
        let x = concat_channels(&refs)?;
        Ok(self.fusion.forward(s, &x)?.relu()?)
    }

    pub fn nonlinear_map<'g, T: Float>(&self, s: Scope<'g, T>, x: &Var<'g, T>) -> Result<Var<'g, T>> {
        res_chain(s, x, &self.body)
    }

    /// `[conv -> shuffle(2) -> ReLU]` per stage, then conv to RGB.
    pub fn upscale_reconstruct<'g, T: Float>(&self, s: Scope<'g, T>, x: &Var<'g, T>) -> Result<Var<'g, T>> {
        let mut h = x.clone();
        for up in &self.upsample {
            h = pixel_shuffle(&up.forward(s, &h)?, 2)?.relu()?;
        }
        self.output.forward(s, &h)
    }

    pub fn forward<'g, T: Float>(&self, s: Scope<'g, T>, frames: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        let fused = self.fuse_temporal(s, frames)?;
        let mapped = self.nonlinear_map(s, &fused)?;
        self.upscale_reconstruct(s, &mapped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tdan_tensor::{Graph, Tensor};

    fn net(frames: usize, k2: usize, scale: usize) -> (ParamStore<f64>, SrNet) {
        let mut store = ParamStore::new();
        let n = SrNet::register(&mut store, frames, k2, 8, scale, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        (store, n)
    }

    fn frames(g: &Graph<f64>, k: usize, h: usize, w: usize, seed: u64) -> Vec<Var<'_, f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k).map(|_| g.constant(Tensor::random_uniform([1, 3, h, w], 0.0, 1.0, &mut rng))).collect()
    }

    #[test]
    fn fusion_width_for_five_frames() {
        let (store, n) = net(5, 0, 4);
        assert_eq!(store.value(n.fusion.weight).shape().dims(), [8, 15, 3, 3]);
    }

    #[test]
    fn frame_count_checked_and_order_matters() {
        let (store, n) = net(3, 1, 2);
        let g = Graph::no_grad();
        let s = Scope::new(&g, &store);
        let f = frames(&g, 3, 5, 5, 2);
        assert!(n.fuse_temporal(s, &f[..2]).is_err());
        let a = n.fuse_temporal(s, &f).unwrap();
        let swapped = vec![f[2].clone(), f[1].clone(), f[0].clone()];
        let b = n.fuse_temporal(s, &swapped).unwrap();
        assert_eq!(a.shape().dims(), [1, 8, 5, 5]);
        assert_ne!(a.value(), b.value());
    }

    #[test]
    fn empty_body_is_identity() {
        let (store, n) = net(1, 0, 4);
        let g = Graph::no_grad();
        let x = Tensor::random_uniform([1, 8, 3, 3], -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        let y = n.nonlinear_map(Scope::new(&g, &store), &g.constant(x.clone())).unwrap();
        assert_eq!(y.value(), &x);
    }

    #[test]
    fn zero_weight_body_is_identity() {
        let (mut store, n) = net(1, 3, 4);
        for b in &n.body {
            store.value_mut(b.conv1.weight).fill(0.0);
            store.value_mut(b.conv2.weight).fill(0.0);
        }
        let g = Graph::no_grad();
        let x = Tensor::random_uniform([1, 8, 3, 3], -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        let y = n.nonlinear_map(Scope::new(&g, &store), &g.constant(x.clone())).unwrap();
        assert_eq!(y.value(), &x);
    }

    #[test]
    fn output_geometry() {
        for (scale, stages) in [(4, 2), (2, 1)] {
            let (store, n) = net(1, 1, scale);
            assert_eq!(n.upsample.len(), stages);
            let g = Graph::no_grad();
            let y = n.forward(Scope::new(&g, &store), &frames(&g, 1, 12, 12, 3)).unwrap();
            assert_eq!(y.shape().dims(), [1, 3, 12 * scale, 12 * scale]);
            assert!(y.value().first_non_finite().is_none());
        }
        let mut store = ParamStore::<f32>::new();
        assert!(SrNet::register(&mut store, 1, 0, 8, 3, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let (store, n) = net(1, 2, 4);
        let g = Graph::no_grad();
        let y = n.upscale_reconstruct(Scope::new(&g, &store), &g.constant(Tensor::zeros([1, 8, 3, 3]))).unwrap();
        assert!(y.value().data().iter().all(|&v| v == 0.0));
    }
}
