//! Fusion knowledge distillation losses.
//!
//! Each block loss is `KL(σ_f ‖ σ_m) + CE(softmax(z_m), y)` where `σ` are
//! tempered softmaxes of the fusion (`f`) and block (`m`) logits; the fusion
//! loss is plain cross-entropy. The fusion distribution acts as a fixed
//! teacher: no gradient flows into the fusion logits from the KL terms.
//! Everything is averaged over the batch.

use super::{HeadOutputs, LogitGrads, ModelError};
use crate::nn::{
    cross_entropy_with_logits, kl_divergence, kl_grad_wrt_student_logits, tempered_softmax, Scalar, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockLoss<S> {
    pub cross_entropy: S,
    pub fkd: S,
    /// `cross_entropy + fkd`.
    pub total: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown<S> {
    pub blocks: Vec<BlockLoss<S>>,
    /// Fusion head cross-entropy.
    pub fusion: S,
    /// `Σ blocks.total + fusion`, accumulated in `S`.
    pub total: S,
}

/// Softened fusion distributions, one row per sample.
pub fn softened_teacher<S: Scalar>(outputs: &HeadOutputs<S>, temperature: f64) -> Result<Vec<Vec<S>>, ModelError> {
    let (batch, _) = outputs.fusion_logits.dims2()?;
    (0..batch).map(|i| Ok(tempered_softmax(outputs.fusion_logits.row(i), temperature)?.probs)).collect()
}

pub fn compute_losses<S: Scalar>(
    outputs: &HeadOutputs<S>,
    labels: &[usize],
    temperature: f64,
) -> Result<(LossBreakdown<S>, LogitGrads<S>), ModelError> {
    let teacher = softened_teacher(outputs, temperature)?;
    losses_with_teacher(outputs, labels, temperature, &teacher)
}

/// Same as [`compute_losses`] with an explicitly supplied teacher distribution.
pub fn losses_with_teacher<S: Scalar>(
    outputs: &HeadOutputs<S>,
    labels: &[usize],
    temperature: f64,
    teacher: &[Vec<S>],
) -> Result<(LossBreakdown<S>, LogitGrads<S>), ModelError> {
    let (batch, n) = outputs.fusion_logits.dims2()?;
    if labels.len() != batch || teacher.len() != batch {
        return Err(ModelError::Shape(format!(
            "{batch} logit rows but {} labels and {} teacher rows",
            labels.len(),
            teacher.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
        return Err(ModelError::Shape(format!("label {bad} outside {n} classes")));
    }
    let scale = S::one() / S::of(batch as f64);

    let mut blocks = Vec::with_capacity(outputs.block_logits.len());
    let mut block_grads = Vec::with_capacity(outputs.block_logits.len());
    for logits in &outputs.block_logits {
        if logits.shape() != [batch, n] {
            return Err(ModelError::Shape("block logits differ in shape from fusion logits".into()));
        }
        let mut ce_sum = S::zero();
        let mut fkd_sum = S::zero();
        let mut grad = Vec::with_capacity(batch * n);
        for (i, (&label, target)) in labels.iter().zip(teacher).enumerate() {
            let row = logits.row(i);
            let (ce, ce_grad) = cross_entropy_with_logits(row, label)?;
            let student = tempered_softmax(row, temperature)?.probs;
            let fkd = kl_divergence(target, &student)?.value;
            let kl_grad = kl_grad_wrt_student_logits(target, &student, temperature);
            ce_sum = ce_sum + ce;
            fkd_sum = fkd_sum + fkd;
            grad.extend(ce_grad.iter().zip(&kl_grad).map(|(&a, &b)| (a + b) * scale));
        }
        let cross_entropy = ce_sum * scale;
        let fkd = fkd_sum * scale;
        blocks.push(BlockLoss { cross_entropy, fkd, total: cross_entropy + fkd });
        block_grads.push(Tensor::new(vec![batch, n], grad)?);
    }

    let mut fusion_sum = S::zero();
    let mut fusion_grad = Vec::with_capacity(batch * n);
    for (i, &label) in labels.iter().enumerate() {
        let (ce, g) = cross_entropy_with_logits(outputs.fusion_logits.row(i), label)?;
        fusion_sum = fusion_sum + ce;
        fusion_grad.extend(g.into_iter().map(|v| v * scale));
    }
    let fusion = fusion_sum * scale;
    let total = blocks.iter().fold(S::zero(), |acc, b| acc + b.total) + fusion;

    Ok((
        LossBreakdown { blocks, fusion, total },
        LogitGrads { blocks: block_grads, fusion: Tensor::new(vec![batch, n], fusion_grad)? },
    ))
}
