//! Procedural HR videos with known motion.
//!
//! Frames are evaluated analytically at continuous coordinates, so a
//! translation by an integer number of pixels reproduces earlier frames
//! exactly.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tdan_tensor::Tensor;

use super::frames::Frame;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// HR pixels per frame, `(x, y)`.
    pub velocity: (f64, f64),
    /// Radians per frame (rotate-texture).
    pub angular_velocity: f64,
    /// Per-frame magnification (checker-zoom).
    pub zoom: f64,
    /// Sum of sinusoid amplitudes per channel; values stay in `0.5 +- contrast`.
    pub contrast: f64,
    /// Highest spatial frequency in cycles per HR pixel.
    pub max_freq: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            frames: 5,
            height: 128,
            width: 128,
            velocity: (4.0, 0.0),
            angular_velocity: 0.02,
            zoom: 1.03,
            contrast: 0.45,
            max_freq: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Wave {
    fx: f64,
    fy: f64,
    amp: f64,
    phase: f64,
}

/// Sum of random sinusoids per channel, band-limited to `max_freq`.
#[derive(Clone, Debug)]
pub struct Texture {
    channels: [Vec<Wave>; 3],
}

impl Texture {
    pub const WAVES: usize = 6;

    pub fn random(contrast: f64, max_freq: f64, rng: &mut impl Rng) -> Self {
        let mut channel = || {
            let mut waves: Vec<Wave> = (0..Self::WAVES)
                .map(|_| {
                    let f = rng.gen_range(0.2 * max_freq..=max_freq);
                    let theta = rng.gen_range(0.0..PI);
                    Wave { fx: f * theta.cos(), fy: f * theta.sin(), amp: rng.gen_range(0.3..1.0), phase: rng.gen_range(0.0..2.0 * PI) }
                })
                .collect();
            let total: f64 = waves.iter().map(|w| w.amp).sum();
            for w in &mut waves {
                w.amp *= contrast / total;
            }
            waves
        };
        Self { channels: [channel(), channel(), channel()] }
    }

    pub fn eval(&self, c: usize, x: f64, y: f64) -> f64 {
        0.5 + self.channels[c].iter().map(|w| w.amp * (2.0 * PI * (w.fx * x + w.fy * y) + w.phase).sin()).sum::<f64>()
    }
}

/// A family of synthetic videos.
pub trait SynthKind: Send + Sync {
    fn name(&self) -> &str;
    fn render(&self, params: &SynthParams, seed: u64) -> Result<Vec<Frame>>;
}

fn render_with(params: &SynthParams, f: impl Fn(usize, usize, f64, f64) -> f64) -> Vec<Frame> {
    (0..params.frames)
        .map(|t| Tensor::from_fn([1, 3, params.height, params.width], |_, c, y, x| f(t, c, x as f64, y as f64) as f32))
        .collect()
}

/// `I_t(p) = texture(p - v t)`.
struct Translate;

impl SynthKind for Translate {
    fn name(&self) -> &str {
        "translate"
    }

    fn render(&self, p: &SynthParams, seed: u64) -> Result<Vec<Frame>> {
        let tex = Texture::random(p.contrast, p.max_freq, &mut ChaCha8Rng::seed_from_u64(seed));
        let (vx, vy) = p.velocity;
        Ok(render_with(p, |t, c, x, y| tex.eval(c, x - vx * t as f64, y - vy * t as f64)))
    }
}

/// Texture rotating about the frame centre.
struct RotateTexture;

impl SynthKind for RotateTexture {
    fn name(&self) -> &str {
        "rotate-texture"
    }

    fn render(&self, p: &SynthParams, seed: u64) -> Result<Vec<Frame>> {
        let tex = Texture::random(p.contrast, p.max_freq, &mut ChaCha8Rng::seed_from_u64(seed));
        let (cx, cy) = ((p.width as f64 - 1.0) / 2.0, (p.height as f64 - 1.0) / 2.0);
        Ok(render_with(p, |t, c, x, y| {
            let a = -p.angular_velocity * t as f64;
            let (dx, dy) = (x - cx, y - cy);
            tex.eval(c, cx + dx * a.cos() - dy * a.sin(), cy + dx * a.sin() + dy * a.cos())
        }))
    }
}

/// Smooth coloured checkerboard zooming about the frame centre.
struct CheckerZoom;

impl SynthKind for CheckerZoom {
    fn name(&self) -> &str {
        "checker-zoom"
    }

    fn render(&self, p: &SynthParams, seed: u64) -> Result<Vec<Frame>> {
        if p.zoom <= 0.0 {
            return Err(Error::Config(format!("zoom factor must be positive, got {}", p.zoom)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let period = 1.0 / p.max_freq.max(1e-3);
        let tint: [f64; 3] = [rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0)];
        let (ox, oy) = (rng.gen_range(0.0..period), rng.gen_range(0.0..period));
        let (cx, cy) = ((p.width as f64 - 1.0) / 2.0, (p.height as f64 - 1.0) / 2.0);
        Ok(render_with(p, |t, c, x, y| {
            let z = p.zoom.powi(t as i32);
            let (u, v) = ((x - cx) / z + ox, (y - cy) / z + oy);
            let s = (3.0 * (2.0 * PI * u / period).sin() * (2.0 * PI * v / period).sin()).tanh() / 3f64.tanh();
            0.5 + p.contrast * tint[c] * s
        }))
    }
}

/// Synthetic kinds by name.
pub struct SynthRegistry {
    kinds: Vec<Box<dyn SynthKind>>,
}

impl Default for SynthRegistry {
    /// `translate`, `rotate-texture` and `checker-zoom`.
    fn default() -> Self {
        Self { kinds: vec![Box::new(Translate), Box::new(RotateTexture), Box::new(CheckerZoom)] }
    }
}

impl SynthRegistry {
    pub fn register(&mut self, kind: Box<dyn SynthKind>) {
        self.kinds.retain(|k| k.name() != kind.name());
        self.kinds.push(kind);
    }

    pub fn names(&self) -> Vec<&str> {
        self.kinds.iter().map(|k| k.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn SynthKind> {
        self.kinds
            .iter()
            .find(|k| k.name() == name)
            .map(|k| k.as_ref())
            .ok_or_else(|| Error::Config(format!("unknown synthetic kind `{name}` (known: {})", self.names().join(", "))))
    }
}

/// Renders a sequence of the named kind.
pub fn synth_video(kind: &str, params: &SynthParams, seed: u64) -> Result<Vec<Frame>> {
    if params.frames == 0 || params.height == 0 || params.width == 0 {
        return Err(Error::Config("synthetic video needs at least one frame of non-zero size".into()));
    }
    SynthRegistry::default().get(kind)?.render(params, seed)
}
