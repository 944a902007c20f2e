//! Minimal neural engine with reverse-mode gradients.
//!
//! Exactly the layer set the cycle model needs: 3x3 convolutions, leaky
//! ReLU, tanh, 2x2 max pooling, fully connected layers, inverted dropout,
//! and a differentiable uniform subsampler. Double precision throughout;
//! convolutions and fully connected layers run on a GEMM kernel, and every
//! gradient can be verified against central finite differences.

mod adam;
mod gemm;
mod gradcheck;
mod layers;
mod subnet;
mod tensor;
mod weights;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use gradcheck::{grad_check, grad_check_sampled};
pub use layers::{Conv3x3, FullyConnected, Layer, LayerGrads, Saved};
pub use subnet::{Subnet, SubnetGrads};
pub use tensor::Tensor;
pub use weights::{read_weight_records, write_weight_records, WeightRecord, WEIGHT_MAGIC};

/// Whether stochastic layers (dropout) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}
