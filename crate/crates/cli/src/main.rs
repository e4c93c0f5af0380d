//! `tdan`: train, run and verify temporally deformable alignment networks.
//!
//! Exit status: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure (including failed gradient checks), 1 anything else.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdan_core::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "tdan", version, about = "Video super-resolution with temporally deformable alignment")]
struct Cli {
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes the config echo, a loss log and checkpoints.
    Train(TrainArgs),
    /// Super-resolve every frame of an LR sequence.
    Infer(InferArgs),
    /// PSNR / SSIM of predicted frames against ground truth.
    Eval(EvalArgs),
    /// Produce an LR dataset from an HR one, with a manifest.
    Degrade(DegradeArgs),
    /// Render synthetic HR sequences with known motion.
    Synth(SynthArgs),
    /// Finite-difference gradient verification.
    Gradcheck(GradcheckArgs),
    /// Train several variants on identical synthetic data and compare.
    Ablate(AblateArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for the config echo, loss log and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub train_root: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Steps between progress lines on stderr.
    #[arg(long, default_value_t = 10)]
    pub log_every: u64,
}

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of LR PNG frames.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the aligned supporting frames of every clip.
    #[arg(long)]
    pub dump_aligned: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Predicted frames: one sequence directory, or a root of sequences.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground truth with the same layout.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub border: usize,
    #[arg(long, default_value_t = 2)]
    pub skip_head: usize,
    #[arg(long, default_value_t = 2)]
    pub skip_tail: usize,
    /// luma or rgb.
    #[arg(long, default_value = "luma")]
    pub channel: String,
    /// Also write the key-value report here.
    #[arg(long)]
    pub kv: Option<PathBuf>,
}

#[derive(Args)]
pub struct DegradeArgs {
    #[arg(long)]
    pub hr_root: PathBuf,
    #[arg(long)]
    pub out_root: PathBuf,
    /// bi or bd.
    #[arg(long, default_value = "bi")]
    pub mode: String,
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    #[arg(long, default_value_t = 1.6)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub phase: usize,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// translate, rotate-texture or checker-zoom.
    #[arg(long, default_value = "translate")]
    pub kind: String,
    #[arg(long, default_value_t = 1)]
    pub sequences: usize,
    #[arg(long, default_value_t = 5)]
    pub frames: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    /// HR pixels per frame.
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    pub vx: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub vy: f64,
    /// Radians per frame (rotate-texture).
    #[arg(long, default_value_t = 0.02, allow_negative_numbers = true)]
    pub angular_velocity: f64,
    /// Scale factor per frame (checker-zoom).
    #[arg(long, default_value_t = 1.03)]
    pub zoom: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// deform, tensor or all.
    #[arg(long, default_value = "all")]
    pub module: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct AblateArgs {
    /// Ablation configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated variant names, e.g. sisr,mfsr,d2,d3,d4,d5.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    /// Training steps per variant.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes the config echo and the result table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub log_every: u64,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::class) {
        Some(ErrorClass::Config) => 2,
        Some(ErrorClass::Data) => 3,
        Some(ErrorClass::Numeric) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Infer(a) => commands::infer(a),
        Command::Eval(a) => commands::eval(a),
        Command::Degrade(a) => commands::degrade(a),
        Command::Synth(a) => commands::synth(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
