//! TOML application config. Every field is optional; command-line flags
//! override whatever the file sets.

use std::path::{Path, PathBuf};

use resflu_core::data::Attribute;
use resflu_core::model::{ModelConfig, TrainConfig};
use resflu_core::reasoning::ImpactCosts;
use serde::Deserialize;

use crate::error::{Classify, CliError};

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub data: DataPaths,
    pub model: ModelOverrides,
    pub train: TrainOverrides,
    pub eval: EvalSettings,
    pub service: ServiceSettings,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub n_blocks: Option<usize>,
    pub subblocks_per_block: Option<usize>,
    pub block_widths: Option<Vec<usize>>,
    pub kernel: Option<usize>,
    pub block_entry_stride: Option<Vec<usize>>,
    pub seq_len: Option<usize>,
    pub distill_temperature: Option<f64>,
    pub reduced: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub base_lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub cohorts: Option<Vec<String>>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    /// Kept wide so out-of-range values get a clear message.
    pub port: Option<i64>,
}

impl AppConfig {
    /// Reads and validates a config file. Relative data paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).or_usage(format!("cannot read config {}", path.display()))?;
        let mut config: AppConfig = toml::from_str(&text).or_usage(format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.data.train, &mut config.data.test].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self, CliError> {
        path.map(Self::load).transpose().map(Option::unwrap_or_default)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for p in [&self.data.train, &self.data.test].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::usage(format!("config references missing path {}", p.display())));
            }
        }
        if let Some(port) = self.service.port {
            check_port(port)?;
        }
        if let Some(cohorts) = &self.eval.cohorts {
            parse_cohorts(cohorts)?;
        }
        Ok(())
    }

    pub fn model_config(&self, n_classes: usize) -> ModelConfig {
        let mut c = ModelConfig::standard(n_classes);
        let m = &self.model;
        if let Some(v) = m.n_blocks {
            c.n_blocks = v;
        }
        if let Some(v) = m.subblocks_per_block {
            c.subblocks_per_block = v;
        }
        if let Some(v) = &m.block_widths {
            c.block_widths = v.clone();
        }
        if let Some(v) = m.kernel {
            c.kernel = v;
        }
        if let Some(v) = &m.block_entry_stride {
            c.block_entry_stride = v.clone();
        }
        if let Some(v) = m.seq_len {
            c.seq_len = v;
        }
        if let Some(v) = m.distill_temperature {
            c.distill_temperature = v;
        }
        if let Some(v) = m.reduced {
            c.reduced = v;
        }
        c
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut c = TrainConfig::default();
        let t = &self.train;
        if let Some(v) = t.epochs {
            c.epochs = v;
        }
        if let Some(v) = t.base_lr {
            c.base_lr = v;
        }
        if let Some(v) = t.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = t.seed {
            c.seed = v;
        }
        c
    }

    /// Costs from flags, then the file, then α = β = 1.
    pub fn costs(&self, alpha: Option<f64>, beta: Option<f64>) -> Result<ImpactCosts, CliError> {
        let alpha = alpha.or(self.eval.alpha).unwrap_or(1.0);
        let beta = beta.or(self.eval.beta).unwrap_or(1.0);
        ImpactCosts::new(alpha, beta).or_usage("invalid impact costs")
    }

    pub fn port(&self, flag: Option<i64>) -> Result<u16, CliError> {
        match flag.or(self.service.port) {
            Some(p) => check_port(p),
            None => Ok(DEFAULT_PORT),
        }
    }
}

pub fn check_port(port: i64) -> Result<u16, CliError> {
    if (1..=65535).contains(&port) {
        Ok(port as u16)
    } else {
        Err(CliError::usage(format!("port must lie in [1, 65535], got {port}")))
    }
}

/// Attribute names such as `gender`, `pose`, `view`; duplicates collapse.
pub fn parse_cohorts<S: AsRef<str>>(names: &[S]) -> Result<Vec<Attribute>, CliError> {
    let mut out = Vec::new();
    for name in names {
        let name = name.as_ref().trim();
        let attr = Attribute::ALL.into_iter().find(|a| a.as_str() == name).ok_or_else(|| {
            CliError::usage(format!("unknown cohort attribute `{name}` (expected gender, pose or view)"))
        })?;
        if !out.contains(&attr) {
            out.push(attr);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("cohort list is empty"));
    }
    Ok(out)
}
