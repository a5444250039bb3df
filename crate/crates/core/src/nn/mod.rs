//! Differentiable layers. Every layer is a pair of pure functions: a forward
//! pass and a backward pass that takes the forward input plus the gradient
//! of the loss with respect to the output and returns gradients for the
//! input and every parameter.

// Index loops mirror the tensor layouts more plainly than iterator chains here.
#![allow(clippy::needless_range_loop)]

pub mod activation;
pub mod conv;
pub mod pool;
pub mod rgc;
pub mod sctm;
mod tensor;
pub mod upsample;

pub use activation::{leaky_backward, leaky_forward, leaky_relu, LEAKY_SLOPE};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvSpec, Padding};
pub use pool::{pool2d, pool2d_backward, PoolKind, PoolOutput, PoolSpec};
pub use rgc::{rgc_backward, rgc_forward, RgcGrads, RgcWeights};
pub use sctm::{sctm_backward, sctm_forward, SctmGrads, SctmParams, SctmWeights};
pub use tensor::Tensor4;
pub use upsample::{upsample_conv_backward, upsample_conv_forward};
