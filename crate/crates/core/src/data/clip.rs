//! Sequences, clips and randomly cropped training batches.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tdan_tensor::Tensor;

use super::degrade::Degradation;
use super::frames::{list_sequences, load_sequence, Frame};
use crate::{Error, Result};

/// Paired LR and HR frames of one video.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub name: String,
    pub lr: Vec<Frame>,
    pub hr: Vec<Frame>,
}

impl Sequence {
    pub fn new(name: impl Into<String>, lr: Vec<Frame>, hr: Vec<Frame>) -> Result<Self> {
        let name = name.into();
        if lr.is_empty() || lr.len() != hr.len() {
            return Err(Error::Data(format!("{name}: {} LR frames for {} HR frames", lr.len(), hr.len())));
        }
        let seq = Self { name, lr, hr };
        seq.scale()?;
        Ok(seq)
    }

    /// Degrades every HR frame.
    pub fn from_hr(name: impl Into<String>, hr: Vec<Frame>, degradation: &dyn Degradation) -> Result<Self> {
        let lr = hr.iter().map(|f| degradation.apply(f)).collect::<Result<Vec<_>>>()?;
        Self::new(name, lr, hr)
    }

    pub fn len(&self) -> usize {
        self.lr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lr.is_empty()
    }

    /// Integer HR/LR size ratio, identical on both axes.
    pub fn scale(&self) -> Result<usize> {
        let (l, h) = (self.lr[0].shape(), self.hr[0].shape());
        if l.h == 0 || h.h % l.h != 0 || h.w % l.w != 0 || h.h / l.h != h.w / l.w {
            return Err(Error::Data(format!("{}: HR {}x{} is not an integer multiple of LR {}x{}", self.name, h.h, h.w, l.h, l.w)));
        }
        Ok(h.h / l.h)
    }
}

/// `2 * radius + 1` consecutive LR frames around `center` plus the HR
/// reference.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    pub lr: Vec<Frame>,
    pub hr: Frame,
    pub source: String,
    pub center: usize,
}

impl VideoClip {
    pub fn radius(&self) -> usize {
        self.lr.len() / 2
    }

    pub fn reference(&self) -> &Frame {
        &self.lr[self.radius()]
    }

    pub fn scale(&self) -> usize {
        self.hr.shape().h / self.lr[0].shape().h
    }
}

/// Frame indices of the window around `t`, clamped to the sequence with
/// edge replication.
pub fn clip_indices(t: usize, radius: usize, len: usize) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::Data("cannot sample a clip from an empty sequence".into()));
    }
    if t >= len {
        return Err(Error::Data(format!("centre frame {t} is outside a {len}-frame sequence")));
    }
    Ok((0..=2 * radius).map(|k| (t + k).saturating_sub(radius).min(len - 1)).collect())
}

pub fn sample_clip(seq: &Sequence, t: usize, radius: usize) -> Result<VideoClip> {
    let idx = clip_indices(t, radius, seq.len())?;
    Ok(VideoClip { lr: idx.iter().map(|&i| seq.lr[i].clone()).collect(), hr: seq.hr[t].clone(), source: seq.name.clone(), center: t })
}

/// One clip per frame of every sequence.
pub fn all_clips(seqs: &[Sequence], radius: usize) -> Result<Vec<VideoClip>> {
    let mut out = Vec::new();
    for s in seqs {
        for t in 0..s.len() {
            out.push(sample_clip(s, t, radius)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchConfig {
    pub batch: usize,
    /// LR patch side; the HR patch is `scale` times larger.
    pub patch: usize,
    /// Random horizontal flip and temporal reversal, each with p = 0.5.
    pub augment: bool,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { batch: 64, patch: 48, augment: false }
    }
}

/// Where one batch item came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchOrigin {
    pub clip: usize,
    pub y: usize,
    pub x: usize,
    pub flipped: bool,
    pub reversed: bool,
}

/// Batched clip: `frames[k]` has shape `(B, 3, p, p)` and `hr` is
/// `(B, 3, s p, s p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub frames: Vec<Tensor<f32>>,
    pub hr: Tensor<f32>,
    pub origins: Vec<PatchOrigin>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.hr.shape().n
    }

    pub fn reference(&self) -> &Tensor<f32> {
        &self.frames[self.frames.len() / 2]
    }

    /// Whole clips, uncropped and unaugmented.
    pub fn from_clips(clips: &[&VideoClip]) -> Result<Self> {
        let Some(first) = clips.first() else {
            return Err(Error::Data("cannot batch zero clips".into()));
        };
        let frames = (0..first.lr.len())
            .map(|k| Tensor::stack_batch(&clips.iter().map(|c| &c.lr[k]).collect::<Vec<_>>()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let hr = Tensor::stack_batch(&clips.iter().map(|c| &c.hr).collect::<Vec<_>>())?;
        let origins = (0..clips.len()).map(|clip| PatchOrigin { clip, y: 0, x: 0, flipped: false, reversed: false }).collect();
        Ok(Self { frames, hr, origins })
    }
}

/// Random item stream for position `item` of batch `index`; independent of
/// every other position.
fn item_rng(seed: u64, index: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(1 << 20).wrapping_add(item));
    rng
}

/// Batch number `index` of a run seeded with `seed`: each item picks a clip
/// and one LR crop shared by all its frames, with the co-located HR crop.
pub fn sample_patch_batch(clips: &[VideoClip], cfg: &BatchConfig, seed: u64, index: u64) -> Result<Batch> {
    if clips.is_empty() || cfg.batch == 0 || cfg.patch == 0 {
        return Err(Error::Data("batch sampling needs clips, a positive batch size and a positive patch size".into()));
    }
    let s = clips[0].scale();
    if let Some(c) = clips.iter().find(|c| c.lr[0].shape().h < cfg.patch || c.lr[0].shape().w < cfg.patch) {
        return Err(Error::Data(format!(
            "{} frame {}: LR frames of {}x{} are smaller than the {p}x{p} patch",
            c.source,
            c.center,
            c.lr[0].shape().h,
            c.lr[0].shape().w,
            p = cfg.patch
        )));
    }
    if clips.iter().any(|c| c.scale() != s || c.lr.len() != clips[0].lr.len()) {
        return Err(Error::Data("clips disagree on scale or length".into()));
    }

    let n_frames = clips[0].lr.len();
    let mut frames: Vec<Vec<Tensor<f32>>> = vec![Vec::with_capacity(cfg.batch); n_frames];
    let mut hrs = Vec::with_capacity(cfg.batch);
    let mut origins = Vec::with_capacity(cfg.batch);
    for item in 0..cfg.batch {
        let mut rng = item_rng(seed, index, item as u64);
        let ci = rng.gen_range(0..clips.len());
        let clip = &clips[ci];
        let sh = clip.lr[0].shape();
        let y = rng.gen_range(0..=sh.h - cfg.patch);
        let x = rng.gen_range(0..=sh.w - cfg.patch);
        let (flipped, reversed) = if cfg.augment { (rng.gen_bool(0.5), rng.gen_bool(0.5)) } else { (false, false) };
        let flip = |t: Tensor<f32>| if flipped { t.flip_horizontal() } else { t };
        for k in 0..n_frames {
            let src = if reversed { n_frames - 1 - k } else { k };
            frames[k].push(flip(clip.lr[src].crop(y, x, cfg.patch, cfg.patch)?));
        }
        hrs.push(flip(clip.hr.crop(s * y, s * x, s * cfg.patch, s * cfg.patch)?));
        origins.push(PatchOrigin { clip: ci, y, x, flipped, reversed });
    }
    let frames = frames
        .iter()
        .map(|f| Tensor::stack_batch(&f.iter().collect::<Vec<_>>()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let hr = Tensor::stack_batch(&hrs.iter().collect::<Vec<_>>())?;
    Ok(Batch { frames, hr, origins })
}

/// Loads `hr_root/<seq>/*.png`; LR frames come from `lr_root/<seq>/` when
/// given, otherwise from degrading the HR frames.
pub fn load_sequences(hr_root: &Path, lr_root: Option<&Path>, degradation: &dyn Degradation) -> Result<Vec<Sequence>> {
    let mut out = Vec::new();
    for (name, dir) in list_sequences(hr_root)? {
        let hr = load_sequence(&dir)?;
        let seq = match lr_root {
            Some(root) => Sequence::new(name.clone(), load_sequence(&root.join(&name))?, hr)?,
            None => Sequence::from_hr(name, hr, degradation)?,
        };
        out.push(seq);
    }
    Ok(out)
}
