//! Residual temporal convolutional network with per-block heads, a fusion
//! head and fusion knowledge distillation training.

mod artifact;
mod config;
mod distill;
mod network;
mod train;

pub use artifact::{FORMAT_VERSION, MAGIC};
pub use config::{ModelConfig, TrainConfig};
pub use distill::{compute_losses, losses_with_teacher, softened_teacher, BlockLoss, LossBreakdown};
pub use network::{
    init_model, BlockGrads, ForwardPass, HeadOutputs, LogitGrads, Mode, ModelGrads, ResBlock, ResTcnModel,
    ResidualUnit, UnitGrads,
};
pub use train::{gather_batch, train, train_with_observer, EpochRecord, Prediction, TrainError, TrainHistory};

use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("model has {model} classes but the data has {data}")]
    ClassMismatch { model: usize, data: usize },
    #[error("model artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
