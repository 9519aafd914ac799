//! Dense tensors, the layer kernels needed by the slicegan networks, and a
//! tape-based reverse-mode autodiff engine on top of them.
//!
//! Everything is channels-last: a 2-D feature map is `[batch, h, w, c]` and a
//! volume is `[batch, h, w, d, c]`. Network math runs in `f32`; the same code
//! is instantiated for `f64` so gradients can be checked against finite
//! differences (see [`gradcheck`]).

pub mod adam;
pub mod dump;
mod error;
pub mod gradcheck;
pub mod ops;
pub mod rng;
mod scalar;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::{Result, TensorError};
pub use ops::activation::Activation;
pub use ops::conv::Padding;
pub use ops::norm::{BatchNormConfig, BatchNormStats};
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
