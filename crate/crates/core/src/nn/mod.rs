//! Small dense numerical engine: temporal convolution, batch normalisation,
//! ReLU, pooling, fully connected heads, tempered softmax, cross-entropy and
//! KL losses, Adam and cosine annealing. Every layer exposes an exact
//! analytic backward pass.

mod batchnorm;
mod conv;
mod fpenv;
mod layers;
mod loss;
mod optim;
mod tensor;

pub use batchnorm::{BatchNorm, BnCache, BnGrads, BN_EPSILON, BN_MOMENTUM};
pub use conv::{Conv1d, ConvGrads, ConvSpec, Padding};
pub use fpenv::FlushSubnormals;
pub use layers::{global_avg_pool, global_avg_pool_backward, relu, relu_backward, Linear, LinearGrads};
pub use loss::{
    cross_entropy, cross_entropy_with_logits, kl_divergence, kl_grad_wrt_student_logits, softmax, tempered_softmax,
    KlDivergence, SoftenedDistribution, KL_FLOOR,
};
pub use optim::{adam_step, cosine_lr, AdamState, LrSchedule};
pub use tensor::{gemm, MatRef, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}
