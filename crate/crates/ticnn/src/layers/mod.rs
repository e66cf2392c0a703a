//! Forward and backward passes for the network building blocks.
//!
//! Each layer owns its parameters, matching gradient buffers, and whatever
//! cache its backward pass needs from the preceding forward. Caches are only
//! written in [`Mode::Train`]; calling backward without a cached forward is
//! a state error.

mod conv;
mod dense;
mod pool;
mod relu;
mod softmax;

pub use conv::ConvLayer;
pub use dense::DenseLayer;
pub use pool::MaxPoolLayer;
pub use relu::ReluLayer;
pub use softmax::{softmax_probs, softmax_xent_loss, SoftmaxXent};

/// Whether a forward pass is part of training (caches written, random
/// transforms active) or testing (pure function of the input).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Test,
}

/// Mutable view of one parameter buffer paired with its gradient, handed to
/// the optimizer.
pub struct ParamSlot<'a> {
    pub is_bias: bool,
    pub values: &'a mut [Real],
    pub grad: &'a [Real],
}

use crate::Real;

/// Weight initialization: N(0, 0.01²) for weights, 0.1 for biases.
pub(crate) const INIT_WEIGHT_STD: crate::Real = 0.01;
pub(crate) const INIT_BIAS: crate::Real = 0.1;
