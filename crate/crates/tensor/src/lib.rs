//! Minimal dense-tensor engine with tape-based reverse-mode differentiation.
//!
//! Tensors are rank-4 `(batch, channels, height, width)` arrays in row-major
//! order. Forward ops are recorded on a [`Graph`]; [`Graph::backward`] returns
//! the gradient of a scalar loss with respect to every leaf, and
//! [`Grads::write_params`] moves parameter gradients into a [`ParamStore`].
//!
//! ```
//! use tdan_tensor::{ops, Graph, Tensor};
//!
//! let g = Graph::<f64>::new();
//! let x = g.constant(Tensor::ones([1, 1, 3, 3]));
//! let w = g.variable(Tensor::ones([1, 1, 3, 3]));
//! let y = ops::conv2d(&x, &w, None, 1, 0).unwrap();
//! assert_eq!(y.value().item(), 9.0);
//! let grads = g.backward(&y).unwrap();
//! assert_eq!(grads.wrt(&w).sum(), 9.0);
//! ```

pub mod deform;
mod error;
mod float;
pub mod gradcheck;
mod graph;
pub mod ops;
mod params;
mod scope;
mod tensor;

pub use error::{Result, TensorError};
pub use float::{DType, Float};
pub use graph::{Backward, BackwardCtx, Grads, Graph, Var};
pub use params::{fan_in_bound, uniform_conv_weight, ParamId, ParamStore, ParamTensor};
pub use scope::Scope;
pub use tensor::{Shape, Tensor};
