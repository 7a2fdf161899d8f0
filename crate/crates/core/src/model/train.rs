use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{compute_losses, Mode, ModelError, ResTcnModel, TrainConfig};
use crate::data::{PreparedSet, FEATURE_DIM};
use crate::nn::{adam_step, cosine_lr, softmax, AdamState, FlushSubnormals, LrSchedule, NnError, Scalar, Tensor};

/// Per-epoch averages, weighted by batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate of the last step in the epoch.
    pub lr: f64,
    pub block_loss: Vec<f64>,
    pub block_cross_entropy: Vec<f64>,
    pub block_fkd: Vec<f64>,
    pub fusion_loss: f64,
    pub total_loss: f64,
    /// Train-mode accuracy of each block head over the epoch's batches.
    pub block_accuracy: Vec<f64>,
    pub fusion_accuracy: f64,
}

impl EpochRecord {
    pub fn mean_fkd(&self) -> f64 {
        self.block_fkd.iter().sum::<f64>() / self.block_fkd.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError<S: Scalar> {
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training diverged in epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        /// Model as it stood at the end of the last finite epoch.
        checkpoint: Box<ResTcnModel<S>>,
        history: TrainHistory,
    },
}

/// Gathers `indices` into a `[B, T, 34]` batch.
pub fn gather_batch<S: Scalar>(set: &PreparedSet, indices: &[usize]) -> Result<Tensor<S>, ModelError> {
    let mut data = Vec::with_capacity(indices.len() * set.sample_width());
    for &i in indices {
        data.extend(set.sample(i).iter().map(|&v| S::of(v)));
    }
    Ok(Tensor::new(vec![indices.len(), set.seq_len, FEATURE_DIM], data)?)
}

/// Rolls `model` back to the last finite epoch.
fn diverged<S: Scalar>(
    model: &mut ResTcnModel<S>,
    checkpoint: ResTcnModel<S>,
    epoch: usize,
    reason: String,
    history: TrainHistory,
) -> TrainError<S> {
    *model = checkpoint;
    TrainError::Diverged { epoch, reason, checkpoint: Box::new(model.clone()), history }
}

fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn train<S: Scalar>(
    model: &mut ResTcnModel<S>,
    set: &PreparedSet,
    config: &TrainConfig,
) -> Result<TrainHistory, TrainError<S>> {
    train_with_observer(model, set, config, |_| {})
}

/// Mini-batch Adam with one cosine-annealing cycle across all steps. The
/// shuffle stream is seeded from `config.seed`, so runs are reproducible.
pub fn train_with_observer<S: Scalar>(
    model: &mut ResTcnModel<S>,
    set: &PreparedSet,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<TrainHistory, TrainError<S>> {
    config.validate()?;
    if set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    if set.n_classes != model.config.n_classes || set.seq_len != model.config.seq_len {
        return Err(ModelError::ClassMismatch { model: model.config.n_classes, data: set.n_classes }.into());
    }
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok(history);
    }

    let n = set.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let schedule =
        LrSchedule::new(config.base_lr, (config.epochs * batches_per_epoch) as u64).map_err(ModelError::from)?;
    let mut adam = AdamState::<S>::new(&model.param_lens());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let n_blocks = model.blocks.len();
    let temperature = model.config.distill_temperature;
    let mut checkpoint = model.clone();
    let mut step = 0u64;
    let _flush = FlushSubnormals::enable();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut block_loss = vec![0.0; n_blocks];
        let mut block_ce = vec![0.0; n_blocks];
        let mut block_fkd = vec![0.0; n_blocks];
        let mut block_correct = vec![0usize; n_blocks];
        let (mut fusion_loss, mut total_loss, mut fusion_correct) = (0.0, 0.0, 0usize);
        let mut lr = config.base_lr;

        for chunk in order.chunks(config.batch_size) {
            let input = gather_batch::<S>(set, chunk)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| set.labels[i]).collect();
            let forward = model
                .forward(&input, Mode::Train)
                .and_then(|pass| compute_losses(&pass.outputs, &labels, temperature).map(|l| (pass, l)));
            let (pass, (loss, logit_grads)) = match forward {
                Ok(v) => v,
                Err(ModelError::Nn(NnError::NonFinite(what))) => {
                    let reason = format!("non-finite {what} at step {step}");
                    return Err(diverged(model, checkpoint, epoch, reason, history));
                }
                Err(e) => return Err(e.into()),
            };
            if !loss.total.is_finite() {
                let reason = format!("non-finite loss at step {step}");
                return Err(diverged(model, checkpoint, epoch, reason, history));
            }
            let grads = model.backward(&pass, &logit_grads)?.into_flat();
            lr = cosine_lr(step, &schedule);
            if let Err(e) = adam_step(&mut model.params_mut(), &grads, &mut adam, lr) {
                return Err(diverged(model, checkpoint, epoch, e.to_string(), history));
            }
            model.commit_batch_stats(&pass);
            step += 1;

            let weight = chunk.len() as f64;
            for (m, b) in loss.blocks.iter().enumerate() {
                block_loss[m] += b.total.as_f64() * weight;
                block_ce[m] += b.cross_entropy.as_f64() * weight;
                block_fkd[m] += b.fkd.as_f64() * weight;
                let logits = &pass.outputs.block_logits[m];
                block_correct[m] += labels.iter().enumerate().filter(|(i, &y)| argmax(logits.row(*i)) == y).count();
            }
            fusion_loss += loss.fusion.as_f64() * weight;
            total_loss += loss.total.as_f64() * weight;
            fusion_correct +=
                labels.iter().enumerate().filter(|(i, &y)| argmax(pass.outputs.fusion_logits.row(*i)) == y).count();
        }

        let nf = n as f64;
        let record = EpochRecord {
            epoch,
            lr,
            block_loss: block_loss.iter().map(|v| v / nf).collect(),
            block_cross_entropy: block_ce.iter().map(|v| v / nf).collect(),
            block_fkd: block_fkd.iter().map(|v| v / nf).collect(),
            fusion_loss: fusion_loss / nf,
            total_loss: total_loss / nf,
            block_accuracy: block_correct.iter().map(|&c| c as f64 / nf).collect(),
            fusion_accuracy: fusion_correct as f64 / nf,
        };
        observer(&record);
        history.epochs.push(record);
        checkpoint = model.clone();
    }
    Ok(history)
}

/// Class distributions of every head (blocks first, fusion last) and the
/// rank-1 fusion label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub heads: Vec<Vec<f64>>,
    pub rank1: usize,
}

impl Prediction {
    pub fn block_label(&self, m: usize) -> usize {
        argmax(&self.heads[m])
    }

    pub fn fusion(&self) -> &[f64] {
        self.heads.last().expect("fusion head present")
    }
}

const PREDICT_CHUNK: usize = 64;

impl<S: Scalar> ResTcnModel<S> {
    /// Inference-mode prediction for one preprocessed `[T, 34]` sequence.
    pub fn predict(&self, features: &[f64]) -> Result<Prediction, ModelError> {
        let input = Tensor::<S>::from_f64(vec![1, self.config.seq_len, self.config.input_dim], features)?;
        Ok(self.predict_tensor(&input)?.remove(0))
    }

    pub fn predict_set(&self, set: &PreparedSet) -> Result<Vec<Prediction>, ModelError> {
        let mut out = Vec::with_capacity(set.len());
        let indices: Vec<usize> = (0..set.len()).collect();
        for chunk in indices.chunks(PREDICT_CHUNK) {
            out.extend(self.predict_tensor(&gather_batch::<S>(set, chunk)?)?);
        }
        Ok(out)
    }

    fn predict_tensor(&self, input: &Tensor<S>) -> Result<Vec<Prediction>, ModelError> {
        let pass = self.forward(input, Mode::Infer)?;
        let batch = input.shape()[0];
        let heads: Vec<&Tensor<S>> =
            pass.outputs.block_logits.iter().chain(std::iter::once(&pass.outputs.fusion_logits)).collect();
        (0..batch)
            .map(|i| {
                let dists = heads
                    .iter()
                    .map(|h| Ok(softmax(h.row(i))?.into_iter().map(|p| p.as_f64()).collect()))
                    .collect::<Result<Vec<Vec<f64>>, ModelError>>()?;
                let rank1 = argmax(dists.last().expect("fusion head present"));
                Ok(Prediction { heads: dists, rank1 })
            })
            .collect()
    }
}
