//! Differentiable ops recorded on a [`Graph`](crate::Graph).

mod concat;
mod conv;
mod elementwise;
mod loss;
mod shuffle;

pub use concat::{concat_channels, concat_channels_forward};
pub use conv::{conv2d, conv2d_backward, conv2d_forward, ConvGeometry, ConvGrads};
pub use loss::l1_loss;
pub use shuffle::{pixel_shuffle, pixel_shuffle_forward, pixel_unshuffle_forward};
