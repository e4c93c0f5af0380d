//! Joint optimization, learning-rate schedule and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod schedule;
pub mod trainer;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use schedule::LrSchedule;
pub use trainer::{alignment_errors, evaluate_loss, steps_per_epoch, StepReport, TrainConfig, Trainer};
