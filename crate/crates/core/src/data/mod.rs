//! Frame I/O, degradations, clip assembly and synthetic video.

pub mod clip;
pub mod degrade;
pub mod frames;
pub mod synth;

pub use clip::{all_clips, clip_indices, load_sequences, sample_clip, sample_patch_batch, Batch, BatchConfig, Sequence, VideoClip};
pub use degrade::{degrade_bd, degrade_bi, upscale_bicubic, Degradation, DegradationRegistry, DegradationSpec};
pub use frames::{frame_file_name, list_frames, list_sequences, load_frame, load_sequence, save_frame, save_sequence, Frame};
pub use synth::{synth_video, SynthParams, SynthRegistry};
