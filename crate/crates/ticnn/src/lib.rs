//! Convolutional networks with random affine transforms of feature maps.
//!
//! The crate trains small CNNs in which selected convolution inputs are
//! warped by a freshly sampled rotation/scale/translation on every training
//! presentation, with gradients carried back through the exact bilinear
//! interpolation coefficients. At test time the transform layer is the
//! identity, so trained weights drop into a plain CNN unchanged.
//!
//! Modules:
//! - [`tensor`]: dense rank-4 arrays in (n, c, h, w) layout.
//! - [`transform`]: affine matrix algebra and the sparse bilinear sampler
//!   with its exact transpose.
//! - [`ti_layer`]: the random-transform layer (sampling, caching, adjoint).
//! - [`layers`]: convolution, max-pooling, ReLU, dense, softmax
//!   cross-entropy, each with backward passes.
//! - [`data`]: MNIST IDX I/O, distortion protocols (R/S/T/RTS), batching.
//! - [`training`]: network assembly, SGD, checkpoints, evaluation.
//! - [`analysis`]: invariance scoring and retrieval descriptors.

pub mod analysis;
pub mod data;
mod error;
pub mod layers;
mod linalg;
pub mod tensor;
pub mod ti_layer;
pub mod training;
pub mod transform;

pub use error::{Error, Result};

/// Scalar element type for all tensors and parameters.
///
/// Defaults to `f64`; the `f32` cargo feature switches the whole crate to
/// single precision for faster training. Gradient checks and the documented
/// tolerances assume the default.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;
