//! Short training runs of several variants on identical synthetic data.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_clip, synth_video, upscale_bicubic, DegradationRegistry, DegradationSpec, Sequence, SynthParams, VideoClip};
use crate::metrics::{format_metric, psnr, EvalProtocol};
use crate::model::{Model, VariantRegistry};
use crate::train::{steps_per_epoch, StepReport, TrainConfig, Trainer};
use crate::{Error, ModelConfig, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    /// Settings shared by every variant; presets override family and depth.
    pub model: ModelConfig,
    pub variants: Vec<String>,
    pub train_clips: usize,
    pub val_clips: usize,
    /// LR frame side of every synthetic clip.
    pub lr_size: usize,
    /// Synthetic kind of every clip.
    pub kind: String,
    /// Each clip moves with a velocity drawn uniformly from
    /// `[-max_speed, max_speed]^2` HR pixels per frame.
    pub max_speed: f64,
    pub degradation: DegradationSpec,
    pub train: TrainConfig,
    /// Steps per variant.
    pub steps: u64,
    /// Validation metric settings; only border and channel apply.
    pub protocol: EvalProtocol,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            variants: ["sisr", "mfsr", "d4"].map(String::from).to_vec(),
            train_clips: 50,
            val_clips: 10,
            lr_size: 32,
            kind: "translate".into(),
            max_speed: 6.0,
            degradation: DegradationSpec::default(),
            train: TrainConfig { batch: 4, patch: 16, halve_every: 0, ..TrainConfig::default() },
            steps: 2000,
            protocol: EvalProtocol::default(),
        }
    }
}

/// Training and validation clips.
pub struct AblationData {
    pub train: Vec<VideoClip>,
    pub val: Vec<VideoClip>,
}

/// Builds `train_clips + val_clips` independent synthetic clips. Every
/// clip has its own texture and velocity; validation textures never occur
/// in training.
pub fn ablation_data(cfg: &AblationConfig, seed: u64) -> Result<AblationData> {
    let m = &cfg.model;
    let mut spec = cfg.degradation.clone();
    spec.scale = m.scale;
    let degradation = DegradationRegistry::default().build(&spec)?;
    let hr_side = cfg.lr_size * m.scale;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |i: usize| -> Result<VideoClip> {
        let velocity = (rng.gen_range(-cfg.max_speed..=cfg.max_speed), rng.gen_range(-cfg.max_speed..=cfg.max_speed));
        let tex_seed = rng.gen::<u64>();
        let params = SynthParams { frames: m.frames(), height: hr_side, width: hr_side, velocity, ..Default::default() };
        let hr = synth_video(&cfg.kind, &params, tex_seed)?;
        let seq = Sequence::from_hr(format!("clip{i:03}"), hr, degradation.as_ref())?;
        sample_clip(&seq, m.radius, m.radius)
    };
    let train = (0..cfg.train_clips).map(&mut make).collect::<Result<Vec<_>>>()?;
    let val = (cfg.train_clips..cfg.train_clips + cfg.val_clips).map(&mut make).collect::<Result<Vec<_>>>()?;
    Ok(AblationData { train, val })
}

/// Mean PSNR of full-frame reconstructions of each clip's reference frame.
pub fn validation_psnr(model: &Model<f32>, clips: &[VideoClip], protocol: &EvalProtocol) -> Result<f64> {
    let mut total = 0.0;
    for c in clips {
        let (hr, _) = model.infer(&c.lr)?;
        total += psnr(&hr, &c.hr, protocol)?;
    }
    Ok(total / clips.len().max(1) as f64)
}

/// Mean PSNR of bicubic upscaling of each clip's reference frame.
pub fn bicubic_psnr(clips: &[VideoClip], protocol: &EvalProtocol) -> Result<f64> {
    let mut total = 0.0;
    for c in clips {
        total += psnr(&upscale_bicubic(c.reference(), c.scale())?, &c.hr, protocol)?;
    }
    Ok(total / clips.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub config: ModelConfig,
    pub params: usize,
    pub val_psnr: f64,
    /// Training loss of the last step.
    pub final_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub seed: u64,
    pub steps: u64,
    pub bicubic_psnr: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ablation: {} steps per variant, seed {}", self.steps, self.seed);
        let _ = writeln!(s, "{:<8} {:>10} {:>10} {:>10} {:>9}", "variant", "params", "val psnr", "last loss", "time");
        let _ = writeln!(s, "{:<8} {:>10} {:>10} {:>10} {:>9}", "bicubic", "-", format_metric(self.bicubic_psnr), "-", "-");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:>10} {:>10} {:>10.5} {:>8.0}s",
                r.variant,
                r.params,
                format_metric(r.val_psnr),
                r.final_loss,
                r.seconds
            );
        }
        s
    }
}

/// Resolves every variant name up front so typos fail before any training.
pub fn resolve_variants(cfg: &AblationConfig) -> Result<Vec<(String, ModelConfig)>> {
    if cfg.variants.is_empty() {
        return Err(Error::Config("no variants to compare".into()));
    }
    let reg = VariantRegistry::default();
    cfg.variants.iter().map(|v| Ok((v.clone(), reg.resolve(v, &cfg.model)?))).collect()
}

/// Trains each variant from the same seed on the same data and scores it on
/// the held-out clips. `on_step` sees the variant name and each step.
pub fn run_ablation(
    cfg: &AblationConfig,
    data: &AblationData,
    seed: u64,
    mut on_step: impl FnMut(&str, &StepReport),
) -> Result<AblationReport> {
    let variants = resolve_variants(cfg)?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Data("ablation needs training and validation clips".into()));
    }
    let train = TrainConfig { seed, ..cfg.train.clone() };
    let spe = steps_per_epoch(data.train.len(), train.batch);
    let mut rows = Vec::with_capacity(variants.len());
    for (name, model) in variants {
        let t = Instant::now();
        let mut trainer = Trainer::<f32>::new(model, &train, true, spe)?;
        let mut last = f64::NAN;
        for _ in 0..cfg.steps {
            let r = trainer.fit_step(&data.train)?;
            on_step(&name, &r);
            last = r.loss.total;
        }
        let val_psnr = validation_psnr(&trainer.model, &data.val, &cfg.protocol)?;
        rows.push(AblationRow {
            variant: name,
            config: model,
            params: trainer.model.param_count(),
            val_psnr,
            final_loss: last,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    Ok(AblationReport { seed, steps: cfg.steps, bicubic_psnr: bicubic_psnr(&data.val, &cfg.protocol)?, rows })
}

/// Smallest PSNR gap between adjacent entries of `order` (best first), or
/// `None` if a variant is missing.
pub fn ordering_margin(report: &AblationReport, order: &[&str]) -> Option<f64> {
    let psnrs: Option<Vec<f64>> = order.iter().map(|v| report.row(v).map(|r| r.val_psnr)).collect();
    let p = psnrs?;
    p.windows(2).map(|w| w[0] - w[1]).reduce(f64::min)
}

/// Per-variant median PSNR over several reports.
pub fn median_psnr(reports: &[AblationReport], variant: &str) -> Option<f64> {
    let mut v: Vec<f64> = reports.iter().filter_map(|r| r.row(variant).map(|r| r.val_psnr)).collect();
    if v.len() != reports.len() || v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    Some(v[v.len() / 2])
}
