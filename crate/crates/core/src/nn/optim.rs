use serde::{Deserialize, Serialize};

use super::tensor::Scalar;
use super::NnError;

/// Adam moments for an ordered list of parameter buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    /// Default hyper-parameters `β1 = 0.9, β2 = 0.999, ε = 1e-8`.
    pub fn new(buffer_lens: &[usize]) -> Self {
        Self::with_hyper(buffer_lens, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(buffer_lens: &[usize], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: buffer_lens.iter().map(|&n| vec![S::zero(); n]).collect(),
            second: buffer_lens.iter().map(|&n| vec![S::zero(); n]).collect(),
        }
    }
}

/// One bias-corrected Adam update. A non-finite gradient rejects the whole
/// update; parameters and state are then left untouched.
pub fn adam_step<S: Scalar>(
    params: &mut [&mut [S]],
    grads: &[Vec<S>],
    state: &mut AdamState<S>,
    lr: f64,
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(NnError::Shape(format!(
            "adam got {} parameter buffers, {} gradients, {} moment buffers",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first[i].len() {
            return Err(NnError::Shape(format!("adam buffer {i} length mismatch")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite(format!("gradient buffer {i}")));
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let b1 = S::of(state.beta1);
    let b2 = S::of(state.beta2);
    let one = S::one();
    let inv_correction1 = S::of(1.0 / (1.0 - state.beta1.powf(t)));
    let inv_correction2 = S::of(1.0 / (1.0 - state.beta2.powf(t)));
    let eps = S::of(state.epsilon);
    let lr = S::of(lr);

    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.first.iter_mut().zip(state.second.iter_mut())) {
        for (((pj, &gj), mj), vj) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mj = b1 * *mj + (one - b1) * gj;
            *vj = b2 * *vj + (one - b2) * gj * gj;
            let m_hat = *mj * inv_correction1;
            let v_hat = *vj * inv_correction2;
            *pj = *pj - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// One cosine-annealing cycle from `base_lr` down to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, total_steps: u64) -> Result<Self, NnError> {
        if !(base_lr > 0.0) || !base_lr.is_finite() {
            return Err(NnError::Config(format!("base lr must be > 0, got {base_lr}")));
        }
        if total_steps == 0 {
            return Err(NnError::Config("schedule needs at least one step".into()));
        }
        Ok(Self { base_lr, total_steps })
    }
}

/// `0.5·base·(1 + cos(π·step/total))`; steps past the end clamp to the final value.
pub fn cosine_lr(step: u64, schedule: &LrSchedule) -> f64 {
    let step = step.min(schedule.total_steps) as f64;
    let phase = std::f64::consts::PI * step / schedule.total_steps as f64;
    0.5 * schedule.base_lr * (1.0 + phase.cos())
}
