//! Overfitting one synthetic clip: the smallest end-to-end training run.

use serde::{Deserialize, Serialize};

use crate::data::{sample_clip, synth_video, Batch, DegradationRegistry, DegradationSpec, Sequence, SynthParams, VideoClip};
use crate::losses::LossReport;
use crate::train::{alignment_errors, evaluate_loss, StepReport, TrainConfig, Trainer};
use crate::{ModelConfig, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub model: ModelConfig,
    /// LR frame side.
    pub lr_size: usize,
    /// HR pixels per frame.
    pub velocity: (f64, f64),
    pub steps: u64,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self { model: ModelConfig::default(), lr_size: 32, velocity: (4.0, 0.0), steps: 500, lr: 1e-4, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct ToyReport {
    pub history: Vec<StepReport>,
    /// Losses of the trained model on the clip.
    pub final_loss: LossReport,
    /// Per supporting frame: (aligned-to-reference L1, raw-to-reference L1).
    pub alignment: Vec<(f64, f64)>,
}

/// A translating-texture clip of `2 * radius + 1` frames, BI-degraded,
/// centred on its middle frame.
pub fn toy_clip(cfg: &ToyConfig) -> Result<VideoClip> {
    let m = &cfg.model;
    let hr_side = cfg.lr_size * m.scale;
    let params =
        SynthParams { frames: m.frames(), height: hr_side, width: hr_side, velocity: cfg.velocity, ..Default::default() };
    let hr = synth_video("translate", &params, cfg.seed)?;
    let bi = DegradationRegistry::default().build(&DegradationSpec::bi(m.scale))?;
    let seq = Sequence::from_hr("toy", hr, bi.as_ref())?;
    sample_clip(&seq, m.radius, m.radius)
}

/// Full-frame training on the toy clip with a constant learning rate.
pub fn run_toy(cfg: &ToyConfig, mut on_step: impl FnMut(&StepReport)) -> Result<ToyReport> {
    let clip = toy_clip(cfg)?;
    let batch = Batch::from_clips(&[&clip])?;
    let train = TrainConfig { batch: 1, patch: cfg.lr_size, lr: cfg.lr, halve_every: 0, seed: cfg.seed, ..Default::default() };
    let mut trainer = Trainer::<f32>::new(cfg.model, &train, false, 1)?;
    let mut history = Vec::with_capacity(cfg.steps as usize);
    for _ in 0..cfg.steps {
        let r = trainer.train_step(&batch)?;
        on_step(&r);
        history.push(r);
    }
    let final_loss = evaluate_loss(&trainer.model, &batch)?;
    let alignment = alignment_errors(&trainer.model, &batch)?;
    Ok(ToyReport { history, final_loss, alignment })
}
