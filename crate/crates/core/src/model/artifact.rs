//! Model artifact file.
//!
//! Layout:
//!
//! ```text
//! restcn-model\n
//! {JSON header: format_version, config, classes, calibrated, tensors[{name, len}]}\n
//! <f32 little-endian values of every listed tensor, in listed order>
//! ```
//!
//! Tensors are the trainable buffers in declaration order followed by the
//! running mean and variance of every batch norm.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{init_model, ModelConfig, ModelError, ResTcnModel};
use crate::nn::Scalar;

pub const MAGIC: &str = "restcn-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    classes: Vec<String>,
    calibrated: bool,
    tensors: Vec<TensorEntry>,
}

impl<S: Scalar> ResTcnModel<S> {
    fn stat_entries(&self) -> Vec<(String, Vec<S>)> {
        let mut out = Vec::new();
        for (i, norm) in self.norms().enumerate() {
            out.push((format!("bn{i}.running_mean"), norm.running_mean.clone()));
            out.push((format!("bn{i}.running_var"), norm.running_var.clone()));
        }
        out
    }

    pub fn save<W: Write>(&self, mut writer: W) -> Result<(), ModelError> {
        let params = self.named_params();
        let stats = self.stat_entries();
        let tensors = params
            .iter()
            .map(|(name, p)| TensorEntry { name: name.clone(), len: p.len() })
            .chain(stats.iter().map(|(name, s)| TensorEntry { name: name.clone(), len: s.len() }))
            .collect();
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            classes: self.classes.clone(),
            calibrated: self.is_calibrated(),
            tensors,
        };
        writeln!(writer, "{MAGIC}")?;
        serde_json::to_writer(&mut writer, &header).map_err(|e| ModelError::Artifact(e.to_string()))?;
        writer.write_all(b"\n")?;

        let mut bytes = Vec::new();
        for values in params.iter().map(|(_, p)| *p).chain(stats.iter().map(|(_, s)| s.as_slice())) {
            for v in values {
                bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        writer.write_all(&bytes)?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self, ModelError> {
        let mut reader = BufReader::new(reader);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(ModelError::Artifact("not a model artifact (bad magic line)".into()));
        }
        line.clear();
        reader.read_line(&mut line)?;
        let header: Header =
            serde_json::from_str(line.trim_end()).map_err(|e| ModelError::Artifact(format!("bad header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(ModelError::Artifact(format!("unsupported format version {}", header.format_version)));
        }

        let mut model = init_model::<S>(&header.config, 0)?;
        model.set_classes(header.classes)?;
        let expected: Vec<(String, usize)> = model
            .named_params()
            .iter()
            .map(|(n, p)| (n.clone(), p.len()))
            .chain(model.stat_entries().iter().map(|(n, s)| (n.clone(), s.len())))
            .collect();
        let listed: Vec<(String, usize)> = header.tensors.iter().map(|t| (t.name.clone(), t.len)).collect();
        if expected != listed {
            return Err(ModelError::Artifact("tensor table does not match the configuration".into()));
        }

        let mut values = Vec::with_capacity(expected.len());
        for (_, len) in &expected {
            let mut buf = vec![0u8; len * 4];
            reader.read_exact(&mut buf).map_err(|e| ModelError::Artifact(format!("truncated tensor data: {e}")))?;
            values.push(
                buf.chunks_exact(4)
                    .map(|c| S::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                    .collect::<Vec<S>>(),
            );
        }
        let mut rest = Vec::new();
        reader.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(ModelError::Artifact(format!("{} trailing bytes", rest.len())));
        }

        let n_params = model.named_params().len();
        let mut it = values.into_iter();
        for dst in model.params_mut() {
            dst.copy_from_slice(&it.next().expect("length checked"));
        }
        debug_assert_eq!(n_params + 2 * model.norms().count(), expected.len());
        for norm in model.norms_mut() {
            norm.running_mean = it.next().expect("length checked");
            norm.running_var = it.next().expect("length checked");
            norm.calibrated = header.calibrated;
        }
        Ok(model)
    }
}
