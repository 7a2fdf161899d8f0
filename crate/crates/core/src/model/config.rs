use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::data::{DEFAULT_SEQ_LEN, FEATURE_DIM};

/// Architecture of the residual temporal convolutional network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_blocks: usize,
    pub subblocks_per_block: usize,
    pub block_widths: Vec<usize>,
    pub kernel: usize,
    pub block_entry_stride: Vec<usize>,
    pub n_classes: usize,
    pub input_dim: usize,
    pub seq_len: usize,
    pub distill_temperature: f64,
    /// Permits fewer than four blocks; used by small verification configs.
    #[serde(default)]
    pub reduced: bool,
}

impl ModelConfig {
    pub const BLOCKS: usize = 4;

    /// Four blocks of three units, widths 32/64/128/256, kernel 8,
    /// entry strides 1/2/2/2, distillation temperature 3.
    pub fn standard(n_classes: usize) -> Self {
        Self {
            n_blocks: Self::BLOCKS,
            subblocks_per_block: 3,
            block_widths: vec![32, 64, 128, 256],
            kernel: 8,
            block_entry_stride: vec![1, 2, 2, 2],
            n_classes,
            input_dim: FEATURE_DIM,
            seq_len: DEFAULT_SEQ_LEN,
            distill_temperature: 3.0,
            reduced: false,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.n_blocks == 0 {
            return bad("at least one block is required".into());
        }
        if !self.reduced && self.n_blocks != Self::BLOCKS {
            return bad(format!(
                "the network has {} blocks; other counts need the reduced flag (got {})",
                Self::BLOCKS,
                self.n_blocks
            ));
        }
        if self.block_widths.len() != self.n_blocks || self.block_entry_stride.len() != self.n_blocks {
            return bad(format!(
                "{} blocks need as many widths and strides (got {} and {})",
                self.n_blocks,
                self.block_widths.len(),
                self.block_entry_stride.len()
            ));
        }
        if self.subblocks_per_block == 0 || self.kernel == 0 {
            return bad("units per block and kernel width must be >= 1".into());
        }
        if self.block_widths.contains(&0) || self.block_entry_stride.contains(&0) {
            return bad("block widths and strides must be >= 1".into());
        }
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.input_dim == 0 || self.seq_len == 0 {
            return bad("input dimension and sequence length must be >= 1".into());
        }
        if !(self.distill_temperature > 0.0) || !self.distill_temperature.is_finite() {
            return bad(format!("distillation temperature must be > 0, got {}", self.distill_temperature));
        }
        Ok(())
    }

    /// Width of the concatenated pooled features feeding the fusion head.
    pub fn fusion_width(&self) -> usize {
        self.block_widths.iter().sum()
    }
}

/// Optimisation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Epoch count of the original long schedule.
    pub const FULL_EPOCHS: usize = 1000;

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return Err(ModelError::Config(format!("base lr must be > 0, got {}", self.base_lr)));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, base_lr: 0.001, batch_size: 32, seed: 0 }
    }
}
