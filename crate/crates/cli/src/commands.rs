use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use tdan_core::data::{
    all_clips, clip_indices, list_frames, list_sequences, load_frame, load_sequence, load_sequences,
    save_frame, save_sequence, synth_video, DegradationRegistry, DegradationSpec, Frame, SynthParams,
};
use tdan_core::experiments::ablation::{ablation_data, run_ablation, AblationConfig};
use tdan_core::metrics::{evaluate_sequence, EvalProtocol};
use tdan_core::model::Model;
use tdan_core::train::{steps_per_epoch, Checkpoint, Trainer};
use tdan_core::verify::GradCheckRegistry;
use tdan_core::{Error, RunConfig, VariantRegistry};

use crate::{AblateArgs, DegradeArgs, EvalArgs, GradcheckArgs, InferArgs, SynthArgs, TrainArgs};

pub const MANIFEST: &str = "degradation.toml";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Data(format!("{}: cannot create directory: {e}", path.display())).into())
}

fn effective_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &a.variant {
        cfg.model = VariantRegistry::default().resolve(v, &cfg.model)?;
    }
    if let Some(r) = &a.train_root {
        cfg.data.train_root = Some(r.clone());
    }
    if a.steps.is_some() {
        cfg.train.steps = a.steps;
    }
    if let Some(b) = a.batch {
        cfg.train.batch = b;
    }
    if let Some(p) = a.patch {
        cfg.train.patch = p;
    }
    if let Some(lr) = a.lr {
        cfg.train.lr = lr;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> Result<u8> {
    let cfg = effective_config(&a)?;
    let root = cfg.data.train_root.clone().ok_or_else(|| Error::Data("no training data: set data.train_root or --train-root".into()))?;
    let degradation = DegradationRegistry::default().build(&cfg.data.degradation_spec(cfg.model.scale))?;
    let seqs = load_sequences(&root, cfg.data.train_lr_root.as_deref(), degradation.as_ref())?;
    let clips = all_clips(&seqs, cfg.model.radius)?;
    let spe = steps_per_epoch(clips.len(), cfg.train.batch);
    let total = cfg.train.steps.unwrap_or(cfg.train.epochs * spe);

    let mut trainer = match &a.resume {
        Some(p) => Trainer::<f32>::resume(Checkpoint::load(p, Some(&cfg.model))?, &cfg.model, &cfg.train, cfg.data.augment, spe)?,
        None => Trainer::<f32>::new(cfg.model, &cfg.train, cfg.data.augment, spe)?,
    };
    // Surfaces patch/frame size problems before anything is written.
    trainer.next_batch(&clips)?;

    create_dir(&a.out)?;
    let echo = cfg.echo();
    write(&a.out.join("config.toml"), &echo)?;
    println!("{echo}");
    println!(
        "{} clips from {} sequences, {} steps per epoch, {} parameters",
        clips.len(),
        seqs.len(),
        spe,
        trainer.model.param_count()
    );
    let ckpt_dir = cfg.train.checkpoint_dir.clone().unwrap_or_else(|| a.out.join("checkpoints"));
    create_dir(&ckpt_dir)?;

    let log_path = a.out.join("loss.txt");
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    if trainer.step == 0 {
        writeln!(log, "{:>8} {:>6} {:>10} {:>10} {:>10} {:>10}", "step", "epoch", "lr", "l_align", "l_sr", "total")?;
    }
    let t0 = Instant::now();
    while trainer.step < total {
        let r = trainer.fit_step(&clips)?;
        writeln!(
            log,
            "{:>8} {:>6} {:>10.3e} {:>10.6} {:>10.6} {:>10.6}",
            r.step, r.epoch, r.lr, r.loss.l_align, r.loss.l_sr, r.loss.total
        )?;
        if a.log_every > 0 && (r.step % a.log_every == 0 || r.step == total) {
            eprintln!(
                "step {}/{} l_align {:.5} l_sr {:.5} total {:.5} ({:.1}s)",
                r.step,
                total,
                r.loss.l_align,
                r.loss.l_sr,
                r.loss.total,
                t0.elapsed().as_secs_f64()
            );
        }
        if cfg.train.checkpoint_every > 0 && r.step % cfg.train.checkpoint_every == 0 && r.step < total {
            trainer.save(&ckpt_dir.join(format!("step_{:08}.ckpt", r.step)))?;
        }
    }
    let last = ckpt_dir.join("final.ckpt");
    trainer.save(&last)?;
    println!("final checkpoint {}", last.display());

    if let Some(eval_root) = &cfg.data.eval_root {
        let seqs = load_sequences(eval_root, cfg.data.eval_lr_root.as_deref(), degradation.as_ref())?;
        for s in seqs {
            let pred = super_resolve(&trainer.model, &s.lr, None)?;
            let rep = evaluate_sequence(&pred, &s.hr, &cfg.eval)?;
            println!("eval {}\n{}", s.name, rep.to_table());
        }
    }
    Ok(0)
}

/// One HR frame per LR frame; boundary clips replicate edge frames. With
/// `aligned`, the aligned supporting frames of each clip are collected.
fn super_resolve(model: &Model<f32>, lr: &[Frame], mut aligned: Option<&mut Vec<Vec<Frame>>>) -> Result<Vec<Frame>> {
    let radius = model.config().radius;
    let mut out = Vec::with_capacity(lr.len());
    for t in 0..lr.len() {
        let clip: Vec<Frame> = clip_indices(t, radius, lr.len())?.into_iter().map(|i| lr[i].clone()).collect();
        let (hr, al) = model.infer(&clip)?;
        if let Some(dump) = aligned.as_deref_mut() {
            dump.push(al);
        }
        out.push(hr);
    }
    Ok(out)
}

pub fn infer(a: InferArgs) -> Result<u8> {
    let ck = Checkpoint::<f32>::load(&a.checkpoint, None)?;
    let model = Model::from_params(ck.config, ck.params)?;
    let lr = load_sequence(&a.input)?;
    println!("{}", toml::to_string(model.config()).expect("model config serializes"));
    let mut aligned = Vec::new();
    let hr = super_resolve(&model, &lr, a.dump_aligned.then_some(&mut aligned))?;
    save_sequence(&hr, &a.out)?;
    if a.dump_aligned {
        for (t, frames) in aligned.iter().enumerate() {
            let dir = a.out.join("aligned").join(format!("frame_{t:05}"));
            create_dir(&dir)?;
            for (k, f) in frames.iter().enumerate() {
                save_frame(f, &dir.join(format!("support_{k}.png")))?;
            }
        }
    }
    println!("wrote {} frames of {}x{} to {}", hr.len(), hr[0].shape().h, hr[0].shape().w, a.out.display());
    Ok(0)
}

/// `(name, dir)` pairs: the directory itself if it holds frames, otherwise
/// its sequence sub-directories.
fn sequence_dirs(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    if root.is_dir() && !list_frames(root)?.is_empty() {
        let name = root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(vec![(name, root.to_path_buf())]);
    }
    Ok(list_sequences(root)?)
}

pub fn eval(a: EvalArgs) -> Result<u8> {
    let protocol =
        EvalProtocol { border: a.border, skip_head: a.skip_head, skip_tail: a.skip_tail, channel: a.channel.parse()? };
    println!("{}", toml::to_string(&protocol).expect("protocol serializes"));
    let pred = sequence_dirs(&a.pred)?;
    let gt = sequence_dirs(&a.gt)?;
    if pred.len() != gt.len() {
        return Err(Error::Data(format!("{} predicted sequences vs {} ground-truth sequences", pred.len(), gt.len())).into());
    }
    let mut kv = String::new();
    let (mut psnr_sum, mut ssim_sum) = (0.0, 0.0);
    for ((name, p), (_, g)) in pred.iter().zip(&gt) {
        let rep = evaluate_sequence(&load_sequence(p)?, &load_sequence(g)?, &protocol)?;
        println!("sequence {name}\n{}", rep.to_table());
        for line in rep.to_key_value().lines() {
            let _ = writeln!(kv, "{name} {line}");
        }
        psnr_sum += rep.mean_psnr;
        ssim_sum += rep.mean_ssim;
    }
    let n = pred.len() as f64;
    let _ = writeln!(kv, "mean_psnr {}", tdan_core::metrics::format_metric(psnr_sum / n));
    let _ = writeln!(kv, "mean_ssim {:.6}", ssim_sum / n);
    println!("{kv}");
    if let Some(path) = &a.kv {
        write(path, &kv)?;
    }
    Ok(0)
}

pub fn degrade(a: DegradeArgs) -> Result<u8> {
    let spec = DegradationSpec { mode: a.mode, scale: a.scale, sigma: a.sigma, phase: a.phase };
    let op = DegradationRegistry::default().build(&spec)?;
    let manifest = toml::to_string(&spec).expect("spec serializes");
    println!("{manifest}");
    let seqs = list_sequences(&a.hr_root)?;
    let mut bad = Vec::new();
    let mut frames = Vec::new();
    for (name, dir) in &seqs {
        for path in list_frames(dir)? {
            let f = load_frame(&path)?;
            let sh = f.shape();
            if sh.h % spec.scale != 0 || sh.w % spec.scale != 0 {
                bad.push(format!("{}: {}x{} is not divisible by {}", path.display(), sh.w, sh.h, spec.scale));
            }
            frames.push((name.clone(), path, f));
        }
    }
    if !bad.is_empty() {
        return Err(Error::Data(format!("frames with incompatible sizes:\n{}", bad.join("\n"))).into());
    }
    for (name, path, f) in &frames {
        let dir = a.out_root.join(name);
        create_dir(&dir)?;
        save_frame(&op.apply(f)?, &dir.join(path.file_name().expect("frame files have names")))?;
    }
    write(&a.out_root.join(MANIFEST), &manifest)?;
    println!("wrote {} frames in {} sequences to {}", frames.len(), seqs.len(), a.out_root.display());
    Ok(0)
}

pub fn synth(a: SynthArgs) -> Result<u8> {
    let params = SynthParams {
        frames: a.frames,
        height: a.height,
        width: a.width,
        velocity: (a.vx, a.vy),
        angular_velocity: a.angular_velocity,
        zoom: a.zoom,
        ..Default::default()
    };
    println!("kind = {:?}\nseed = {}\n{}", a.kind, a.seed, toml::to_string(&params).expect("params serialize"));
    for i in 0..a.sequences {
        let frames = synth_video(&a.kind, &params, a.seed + i as u64)?;
        save_sequence(&frames, &a.out.join(format!("seq_{i:03}")))?;
    }
    println!("wrote {} sequences to {}", a.sequences, a.out.display());
    Ok(0)
}

pub fn gradcheck(a: GradcheckArgs) -> Result<u8> {
    let report = GradCheckRegistry::default().run(&a.module, a.seed)?;
    println!("{}", report.to_table());
    Ok(if report.passed() { 0 } else { 4 })
}

pub fn ablate(a: AblateArgs) -> Result<u8> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
            toml::from_str::<AblationConfig>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => AblationConfig::default(),
    };
    if let Some(v) = a.variants {
        cfg.variants = v;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    cfg.train.validate()?;
    tdan_core::experiments::ablation::resolve_variants(&cfg)?;
    let echo = toml::to_string(&cfg).expect("ablation config serializes");
    println!("seed = {}\n{echo}", a.seed);
    let data = ablation_data(&cfg, a.seed)?;
    let t0 = Instant::now();
    let report = run_ablation(&cfg, &data, a.seed, |name, r| {
        if a.log_every > 0 && r.step % a.log_every == 0 {
            eprintln!("{name} step {} loss {:.5} ({:.0}s)", r.step, r.loss.total, t0.elapsed().as_secs_f64());
        }
    })?;
    let table = report.to_table();
    println!("{table}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        write(&out.join("config.toml"), &format!("seed = {}\n{echo}", a.seed))?;
        write(&out.join("ablation.txt"), &table)?;
    }
    Ok(0)
}
