//! Temporally deformable alignment for video super-resolution.
//!
//! The alignment network maps each supporting frame onto the reference frame
//! with a cascade of deformable convolutions; the reconstruction network fuses
//! the aligned clip and upsamples it. Both are trained jointly on
//! `l_align + l_sr`.

pub mod align;
pub mod config;
pub mod data;
pub mod experiments;
mod error;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod reconstruct;
pub mod run_config;
pub mod train;
pub mod verify;

pub use config::{ModelConfig, Variant};
pub use error::{Error, ErrorClass, Result};
pub use model::{Architecture, Model, ModelOutput, VariantRegistry};
pub use run_config::RunConfig;
