//! Desk-scale experiments shared by the command line and the acceptance suite.

pub mod ablation;
pub mod toy;

pub use ablation::{ablation_data, run_ablation, AblationConfig, AblationData, AblationReport, AblationRow};
pub use toy::{run_toy, toy_clip, ToyConfig, ToyReport};
