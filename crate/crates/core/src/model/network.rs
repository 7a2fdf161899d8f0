//! The residual temporal convolutional network.
//!
//! Each unit computes `conv(relu(bn(x))) + shortcut(x)`, where the shortcut is
//! the identity unless the unit changes width or stride, in which case it is a
//! strided width-matching 1-wide convolution. Every block ends in its own
//! classifier head (time-average pool → fully connected); the fusion head
//! classifies the concatenation of all pooled block features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError};
use crate::nn::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, BatchNorm, BnCache, Conv1d, ConvSpec, Linear,
    Padding, Scalar, Tensor,
};

/// Batch norm behaviour for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, caches kept for backward.
    Train,
    /// Running statistics, nothing cached.
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualUnit<S> {
    pub norm: BatchNorm<S>,
    pub conv: Conv1d<S>,
    pub shortcut: Option<Conv1d<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock<S> {
    pub units: Vec<ResidualUnit<S>>,
    pub head: Linear<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResTcnModel<S> {
    pub config: ModelConfig,
    pub classes: Vec<String>,
    pub blocks: Vec<ResBlock<S>>,
    pub fusion: Linear<S>,
}

/// Raw logits of every head, each `[B, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs<S> {
    pub block_logits: Vec<Tensor<S>>,
    pub fusion_logits: Tensor<S>,
}

/// Loss gradients w.r.t. every head's logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGrads<S> {
    pub blocks: Vec<Tensor<S>>,
    pub fusion: Tensor<S>,
}

#[derive(Debug, Clone)]
struct UnitCache<S> {
    input: Tensor<S>,
    norm: BnCache<S>,
    activated: Tensor<S>,
    cols: Vec<S>,
}

#[derive(Debug, Clone)]
struct BlockCache<S> {
    units: Vec<UnitCache<S>>,
    out_len: usize,
    pooled: Tensor<S>,
}

/// Result of [`ResTcnModel::forward`]; in train mode it also holds the
/// activations needed by [`ResTcnModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass<S> {
    pub outputs: HeadOutputs<S>,
    caches: Option<(Vec<BlockCache<S>>, Tensor<S>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitGrads<S> {
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
    pub conv_weight: Vec<S>,
    pub conv_bias: Vec<S>,
    pub shortcut: Option<(Vec<S>, Vec<S>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads<S> {
    pub units: Vec<UnitGrads<S>>,
    pub head_weight: Vec<S>,
    pub head_bias: Vec<S>,
}

/// Parameter gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<S> {
    pub blocks: Vec<BlockGrads<S>>,
    pub fusion_weight: Vec<S>,
    pub fusion_bias: Vec<S>,
}

impl<S> ModelGrads<S> {
    /// Flattened in the same order as [`ResTcnModel::params_mut`].
    pub fn into_flat(self) -> Vec<Vec<S>> {
        let mut out = Vec::new();
        for block in self.blocks {
            for unit in block.units {
                out.push(unit.gamma);
                out.push(unit.beta);
                out.push(unit.conv_weight);
                out.push(unit.conv_bias);
                if let Some((w, b)) = unit.shortcut {
                    out.push(w);
                    out.push(b);
                }
            }
            out.push(block.head_weight);
            out.push(block.head_bias);
        }
        out.push(self.fusion_weight);
        out.push(self.fusion_bias);
        out
    }
}

/// Builds a model with Kaiming-uniform convolution/linear weights and identity
/// batch norms. Deterministic for a fixed seed; classes are named `class0…`.
pub fn init_model<S: Scalar>(config: &ModelConfig, seed: u64) -> Result<ResTcnModel<S>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::with_capacity(config.n_blocks);
    let mut channels = config.input_dim;
    for b in 0..config.n_blocks {
        let width = config.block_widths[b];
        let mut units = Vec::with_capacity(config.subblocks_per_block);
        for u in 0..config.subblocks_per_block {
            let stride = if u == 0 { config.block_entry_stride[b] } else { 1 };
            let mut conv =
                Conv1d::new(channels, ConvSpec::new(width, config.kernel, stride)?, Padding::same(config.kernel))?;
            conv.init_kaiming(&mut rng);
            let shortcut = if channels != width || stride != 1 {
                let mut proj = Conv1d::new(channels, ConvSpec::new(width, 1, stride)?, Padding::VALID)?;
                proj.init_kaiming(&mut rng);
                Some(proj)
            } else {
                None
            };
            units.push(ResidualUnit { norm: BatchNorm::new(channels), conv, shortcut });
            channels = width;
        }
        let mut head = Linear::new(width, config.n_classes);
        head.init_kaiming(&mut rng);
        blocks.push(ResBlock { units, head });
    }
    let mut fusion = Linear::new(config.fusion_width(), config.n_classes);
    fusion.init_kaiming(&mut rng);
    Ok(ResTcnModel {
        config: config.clone(),
        classes: (0..config.n_classes).map(|i| format!("class{i}")).collect(),
        blocks,
        fusion,
    })
}

impl<S: Scalar> ResTcnModel<S> {
    pub fn set_classes(&mut self, classes: Vec<String>) -> Result<(), ModelError> {
        if classes.len() != self.config.n_classes {
            return Err(ModelError::ClassMismatch { model: self.config.n_classes, data: classes.len() });
        }
        self.classes = classes;
        Ok(())
    }

    fn check_input(&self, input: &Tensor<S>) -> Result<(), ModelError> {
        let (_, t, c) = input.dims3()?;
        if t != self.config.seq_len || c != self.config.input_dim {
            return Err(ModelError::Shape(format!(
                "model expects [B, {}, {}] input, got {:?}",
                self.config.seq_len,
                self.config.input_dim,
                input.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor<S>, mode: Mode) -> Result<ForwardPass<S>, ModelError> {
        self.check_input(input)?;
        let batch = input.shape()[0];
        let mut x = input.clone();
        let mut block_logits = Vec::with_capacity(self.blocks.len());
        let mut pooled_all = Vec::with_capacity(self.blocks.len());
        let mut caches = Vec::with_capacity(self.blocks.len());

        for block in &self.blocks {
            let mut unit_caches = Vec::new();
            for unit in &block.units {
                let (normed, norm_cache) = match mode {
                    Mode::Train => {
                        let (y, cache) = unit.norm.forward_train(&x)?;
                        (y, Some(cache))
                    }
                    Mode::Infer => (unit.norm.forward_infer(&x)?, None),
                };
                let activated = relu(&normed);
                let (mut out, cols) = match mode {
                    Mode::Train => unit.conv.forward_keep_cols(&activated)?,
                    Mode::Infer => (unit.conv.forward(&activated)?, Vec::new()),
                };
                match &unit.shortcut {
                    Some(proj) => out.add_assign(&proj.forward(&x)?)?,
                    None => out.add_assign(&x)?,
                }
                if let Some(norm) = norm_cache {
                    unit_caches.push(UnitCache { input: x, norm, activated, cols });
                }
                x = out;
            }
            let pooled = global_avg_pool(&x)?;
            block_logits.push(block.head.forward(&pooled)?);
            if mode == Mode::Train {
                caches.push(BlockCache { units: unit_caches, out_len: x.shape()[1], pooled: pooled.clone() });
            }
            pooled_all.push(pooled);
        }

        let fusion_input = concat_features(&pooled_all, batch)?;
        let fusion_logits = self.fusion.forward(&fusion_input)?;
        Ok(ForwardPass {
            outputs: HeadOutputs { block_logits, fusion_logits },
            caches: (mode == Mode::Train).then_some((caches, fusion_input)),
        })
    }

    /// Folds the batch statistics of a train-mode pass into the running stats.
    pub fn commit_batch_stats(&mut self, pass: &ForwardPass<S>) {
        if let Some((caches, _)) = &pass.caches {
            for (block, cache) in self.blocks.iter_mut().zip(caches) {
                for (unit, uc) in block.units.iter_mut().zip(&cache.units) {
                    unit.norm.update_running(&uc.norm);
                }
            }
        }
    }

    pub fn backward(&self, pass: &ForwardPass<S>, grads: &LogitGrads<S>) -> Result<ModelGrads<S>, ModelError> {
        let (caches, fusion_input) =
            pass.caches.as_ref().ok_or_else(|| ModelError::Shape("backward needs a train-mode forward pass".into()))?;
        if grads.blocks.len() != self.blocks.len() {
            return Err(ModelError::Shape("one logit gradient per block is required".into()));
        }
        let fusion_g = self.fusion.backward(fusion_input, &grads.fusion)?;
        let batch = fusion_input.shape()[0];
        let fusion_pieces = split_features(&fusion_g.input, &self.config.block_widths, batch)?;

        let mut block_grads: Vec<Option<BlockGrads<S>>> = vec![None; self.blocks.len()];
        let mut from_next: Option<Tensor<S>> = None;
        for (b, (block, cache)) in self.blocks.iter().zip(caches).enumerate().rev() {
            let head_g = block.head.backward(&cache.pooled, &grads.blocks[b])?;
            let mut dpooled = head_g.input;
            dpooled.add_assign(&fusion_pieces[b])?;
            let mut g = global_avg_pool_backward(&dpooled, cache.out_len)?;
            if let Some(next) = from_next.take() {
                g.add_assign(&next)?;
            }

            let mut unit_grads = Vec::with_capacity(block.units.len());
            for (u, (unit, uc)) in block.units.iter().zip(&cache.units).enumerate().rev() {
                let first_layer = b == 0 && u == 0;
                let conv_g = unit.conv.backward_with_cols(&uc.cols, uc.activated.shape(), &g, true)?;
                let d_act = conv_g.input.expect("input gradient requested");
                let d_norm = relu_backward(&uc.activated, &d_act)?;
                let bn_g = unit.norm.backward(&uc.norm, &d_norm)?;
                let mut dx = bn_g.input;
                let shortcut = match &unit.shortcut {
                    Some(proj) => {
                        let pg = proj.backward(&uc.input, &g, !first_layer)?;
                        if let Some(d) = &pg.input {
                            dx.add_assign(d)?;
                        }
                        Some((pg.weight, pg.bias))
                    }
                    None => {
                        dx.add_assign(&g)?;
                        None
                    }
                };
                unit_grads.push(UnitGrads {
                    gamma: bn_g.gamma,
                    beta: bn_g.beta,
                    conv_weight: conv_g.weight,
                    conv_bias: conv_g.bias,
                    shortcut,
                });
                g = dx;
            }
            unit_grads.reverse();
            block_grads[b] = Some(BlockGrads { units: unit_grads, head_weight: head_g.weight, head_bias: head_g.bias });
            from_next = Some(g);
        }

        Ok(ModelGrads {
            blocks: block_grads.into_iter().map(|g| g.expect("every block visited")).collect(),
            fusion_weight: fusion_g.weight,
            fusion_bias: fusion_g.bias,
        })
    }

    /// Trainable buffers in declaration order: per unit gamma, beta, conv
    /// weight, conv bias, shortcut weight/bias; per block head weight/bias;
    /// then the fusion head.
    pub fn params_mut(&mut self) -> Vec<&mut [S]> {
        let mut out: Vec<&mut [S]> = Vec::new();
        for block in &mut self.blocks {
            for unit in &mut block.units {
                out.push(&mut unit.norm.gamma);
                out.push(&mut unit.norm.beta);
                out.push(&mut unit.conv.weight);
                out.push(&mut unit.conv.bias);
                if let Some(proj) = &mut unit.shortcut {
                    out.push(&mut proj.weight);
                    out.push(&mut proj.bias);
                }
            }
            out.push(&mut block.head.weight);
            out.push(&mut block.head.bias);
        }
        out.push(&mut self.fusion.weight);
        out.push(&mut self.fusion.bias);
        out
    }

    /// Named trainable buffers in the same order as [`Self::params_mut`].
    pub fn named_params(&self) -> Vec<(String, &[S])> {
        let mut out: Vec<(String, &[S])> = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            for (u, unit) in block.units.iter().enumerate() {
                let p = format!("block{b}.unit{u}");
                out.push((format!("{p}.bn.gamma"), &unit.norm.gamma));
                out.push((format!("{p}.bn.beta"), &unit.norm.beta));
                out.push((format!("{p}.conv.weight"), &unit.conv.weight));
                out.push((format!("{p}.conv.bias"), &unit.conv.bias));
                if let Some(proj) = &unit.shortcut {
                    out.push((format!("{p}.shortcut.weight"), &proj.weight));
                    out.push((format!("{p}.shortcut.bias"), &proj.bias));
                }
            }
            out.push((format!("block{b}.head.weight"), &block.head.weight));
            out.push((format!("block{b}.head.bias"), &block.head.bias));
        }
        out.push(("fusion.weight".into(), &self.fusion.weight));
        out.push(("fusion.bias".into(), &self.fusion.bias));
        out
    }

    pub fn param_lens(&self) -> Vec<usize> {
        self.named_params().iter().map(|(_, p)| p.len()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_lens().iter().sum()
    }

    pub fn norms(&self) -> impl Iterator<Item = &BatchNorm<S>> {
        self.blocks.iter().flat_map(|b| b.units.iter().map(|u| &u.norm))
    }

    pub fn norms_mut(&mut self) -> impl Iterator<Item = &mut BatchNorm<S>> {
        self.blocks.iter_mut().flat_map(|b| b.units.iter_mut().map(|u| &mut u.norm))
    }

    pub fn is_calibrated(&self) -> bool {
        self.norms().all(|n| n.calibrated)
    }

    pub fn cast<T: Scalar>(&self) -> ResTcnModel<T> {
        let v = |xs: &[S]| -> Vec<T> { xs.iter().map(|x| T::of(x.as_f64())).collect() };
        let conv = |c: &Conv1d<S>| Conv1d {
            spec: c.spec,
            in_channels: c.in_channels,
            padding: c.padding,
            weight: v(&c.weight),
            bias: v(&c.bias),
        };
        let lin = |l: &Linear<S>| Linear {
            in_features: l.in_features,
            out_features: l.out_features,
            weight: v(&l.weight),
            bias: v(&l.bias),
        };
        ResTcnModel {
            config: self.config.clone(),
            classes: self.classes.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ResBlock {
                    units: b
                        .units
                        .iter()
                        .map(|u| ResidualUnit {
                            norm: BatchNorm {
                                gamma: v(&u.norm.gamma),
                                beta: v(&u.norm.beta),
                                running_mean: v(&u.norm.running_mean),
                                running_var: v(&u.norm.running_var),
                                calibrated: u.norm.calibrated,
                            },
                            conv: conv(&u.conv),
                            shortcut: u.shortcut.as_ref().map(conv),
                        })
                        .collect(),
                    head: lin(&b.head),
                })
                .collect(),
            fusion: lin(&self.fusion),
        }
    }
}

fn concat_features<S: Scalar>(parts: &[Tensor<S>], batch: usize) -> Result<Tensor<S>, ModelError> {
    let width: usize = parts.iter().map(|p| p.shape()[1]).sum();
    let mut out = Vec::with_capacity(batch * width);
    for bi in 0..batch {
        for p in parts {
            out.extend_from_slice(p.row(bi));
        }
    }
    Ok(Tensor::new(vec![batch, width], out)?)
}

fn split_features<S: Scalar>(whole: &Tensor<S>, widths: &[usize], batch: usize) -> Result<Vec<Tensor<S>>, ModelError> {
    let mut parts: Vec<Vec<S>> = widths.iter().map(|w| Vec::with_capacity(batch * w)).collect();
    for bi in 0..batch {
        let row = whole.row(bi);
        let mut offset = 0;
        for (part, &w) in parts.iter_mut().zip(widths) {
            part.extend_from_slice(&row[offset..offset + w]);
            offset += w;
        }
    }
    parts.into_iter().zip(widths).map(|(data, &w)| Ok(Tensor::new(vec![batch, w], data)?)).collect()
}
