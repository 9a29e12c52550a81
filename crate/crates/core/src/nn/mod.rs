//! Convolutional encoder-decoder with hand-written reverse-mode gradients
//! and an RMSprop training loop.

mod layers;
mod net;
mod optim;
mod tensor;
mod train;

pub use layers::{
    avgpool2, avgpool2_backward, conv1d, conv1d_backward, maxpool2, maxpool2_backward, mse_loss,
    relu, relu_backward, upsample2, upsample2_backward, upsample2_linear,
    upsample2_linear_backward, ConvGrad, ConvSpec,
};
pub use net::{
    backward, forward, predict, sample_loss, sample_loss_and_grad, ForwardCache, NetConfig,
    PoolKind, PwDRecNetGrads, PwDRecNetParams, ResidualBlock, UpsampleKind,
};
pub use optim::{rmsprop_step, RmspropState, DEFAULT_EPS, DEFAULT_LR, DEFAULT_RHO};
pub use tensor::Tensor1;
pub use train::{mean_loss, train, EpochLog, TrainConfig, TrainOutcome};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("pooling needs an even length, got {0}")]
    OddLength(usize),
    #[error("forward cache was produced by different parameters")]
    StaleCache,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
