use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tdan_tensor::{Float, Graph, Tensor};

use super::adam::{clip_grad_norm, Adam, AdamConfig};
use super::checkpoint::{check_config, Checkpoint};
use super::schedule::LrSchedule;
use crate::data::{sample_patch_batch, Batch, BatchConfig, VideoClip};
use crate::losses::{joint_loss, LossReport};
use crate::model::Model;
use crate::{Error, ModelConfig, Result};

/// Optimization settings of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch: usize,
    /// LR patch side.
    pub patch: usize,
    pub lr: f64,
    /// Epochs between learning-rate halvings; 0 keeps it constant.
    pub halve_every: u64,
    pub epochs: u64,
    /// Overrides `epochs` when set.
    pub steps: Option<u64>,
    pub seed: u64,
    /// Global gradient-norm cap; off when unset.
    pub grad_clip: Option<f64>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Steps between periodic checkpoints; 0 saves only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 64,
            patch: 48,
            lr: 1e-4,
            halve_every: 100,
            epochs: 1,
            steps: None,
            seed: 0,
            grad_clip: None,
            checkpoint_dir: None,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule { base: self.lr, halve_every: (self.halve_every > 0).then_some(self.halve_every) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.patch == 0 {
            return Err(Error::Config("batch and patch must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        Ok(())
    }
}

/// One epoch is one pass over the clip list: `ceil(clips / batch)` steps.
pub fn steps_per_epoch(clips: usize, batch: usize) -> u64 {
    clips.div_ceil(batch.max(1)).max(1) as u64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// 1-based index of the step just taken.
    pub step: u64,
    pub epoch: u64,
    pub lr: f64,
    pub loss: LossReport,
}

/// Model, optimizer state and schedule position.
pub struct Trainer<T: Float = f32> {
    pub model: Model<T>,
    pub adam: Adam<T>,
    pub schedule: LrSchedule,
    pub grad_clip: Option<f64>,
    pub batch: BatchConfig,
    /// Seeds both the initialization and the batch streams.
    pub seed: u64,
    /// Steps taken so far.
    pub step: u64,
    pub steps_per_epoch: u64,
}

impl<T: Float> Trainer<T> {
    pub fn new(model: ModelConfig, cfg: &TrainConfig, augment: bool, steps_per_epoch: u64) -> Result<Self> {
        cfg.validate()?;
        let model = Model::new(model, cfg.seed)?;
        Ok(Self::with_model(model, cfg, augment, steps_per_epoch))
    }

    pub fn with_model(model: Model<T>, cfg: &TrainConfig, augment: bool, steps_per_epoch: u64) -> Self {
        let adam = Adam::new(&model.params, AdamConfig::default());
        Self {
            model,
            adam,
            schedule: cfg.schedule(),
            grad_clip: cfg.grad_clip,
            batch: BatchConfig { batch: cfg.batch, patch: cfg.patch, augment },
            seed: cfg.seed,
            step: 0,
            steps_per_epoch: steps_per_epoch.max(1),
        }
    }

    pub fn epoch(&self) -> u64 {
        self.step / self.steps_per_epoch
    }

    pub fn lr(&self) -> f64 {
        self.schedule.lr(self.epoch())
    }

    /// Forward, joint loss, backward and one Adam update on `batch`.
    pub fn train_step(&mut self, batch: &Batch) -> Result<StepReport> {
        let (lr, epoch) = (self.lr(), self.epoch());
        let (grads, loss) = {
            let g = Graph::new();
            let clip: Vec<_> = batch.frames.iter().map(|f| g.constant(f.cast::<T>())).collect();
            let gt = g.constant(batch.hr.cast::<T>());
            let out = self.model.forward(&g, &clip)?;
            let (total, loss) = joint_loss(&out, &clip[clip.len() / 2], &gt)?;
            if !loss.total.is_finite() {
                return Err(Error::Numeric(format!("loss became non-finite at step {}", self.step + 1)));
            }
            (g.backward(&total)?, loss)
        };
        grads.write_params(&mut self.model.params);
        if let Some(max) = self.grad_clip {
            clip_grad_norm(&mut self.model.params, max);
        }
        self.adam.step(&mut self.model.params, lr)?;
        self.step += 1;
        Ok(StepReport { step: self.step, epoch, lr, loss })
    }

    /// The batch the next step would draw from `clips`.
    pub fn next_batch(&self, clips: &[VideoClip]) -> Result<Batch> {
        sample_patch_batch(clips, &self.batch, self.seed, self.step)
    }

    pub fn fit_step(&mut self, clips: &[VideoClip]) -> Result<StepReport> {
        let batch = self.next_batch(clips)?;
        self.train_step(&batch)
    }

    /// Losses on `batch` without updating anything.
    pub fn evaluate(&self, batch: &Batch) -> Result<LossReport> {
        evaluate_loss(&self.model, batch)
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            config: *self.model.config(),
            epoch: self.epoch(),
            step: self.step,
            seed: self.seed,
            params: self.model.params.clone(),
            adam: self.adam.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    /// Continues a run from a checkpoint; the stored model configuration
    /// must equal `model`.
    pub fn resume(
        ck: Checkpoint<T>,
        model: &ModelConfig,
        cfg: &TrainConfig,
        augment: bool,
        steps_per_epoch: u64,
    ) -> Result<Self> {
        check_config(model, &ck.config)?;
        if ck.adam.m.len() != ck.params.len() {
            return Err(Error::Checkpoint("optimizer state does not match the parameter list".into()));
        }
        let mut t = Self::with_model(Model::from_params(ck.config, ck.params)?, cfg, augment, steps_per_epoch);
        t.adam = ck.adam;
        t.step = ck.step;
        t.seed = ck.seed;
        Ok(t)
    }
}

/// Losses of `model` on `batch`, no gradients recorded.
pub fn evaluate_loss<T: Float>(model: &Model<T>, batch: &Batch) -> Result<LossReport> {
    let g = Graph::no_grad();
    let clip: Vec<_> = batch.frames.iter().map(|f| g.constant(f.cast::<T>())).collect();
    let gt = g.constant(batch.hr.cast::<T>());
    let out = model.forward(&g, &clip)?;
    Ok(joint_loss(&out, &clip[clip.len() / 2], &gt)?.1)
}

/// Mean L1 distance of each aligned supporting frame and of each raw
/// supporting frame to the reference, in temporal order.
pub fn alignment_errors<T: Float>(model: &Model<T>, batch: &Batch) -> Result<Vec<(f64, f64)>> {
    let clip: Vec<Tensor<T>> = batch.frames.iter().map(|f| f.cast()).collect();
    let (_, aligned) = model.infer(&clip)?;
    let t = clip.len() / 2;
    let reference = &clip[t];
    let l1 = |a: &Tensor<T>| {
        a.data().iter().zip(reference.data()).map(|(&x, &y)| (x - y).abs().to_f64()).sum::<f64>() / a.numel() as f64
    };
    let raw = clip.iter().enumerate().filter(|&(i, _)| i != t).map(|(_, f)| f);
    Ok(aligned.iter().zip(raw).map(|(a, r)| (l1(a), l1(r))).collect())
}
