//! Tempered softmax, cross-entropy and Kullback-Leibler divergence.
//!
//! Logits are the raw pre-softmax head outputs. Exponentials always go through
//! max-subtraction, so adding a constant to every logit changes nothing.

use super::tensor::Scalar;
use super::NnError;

/// Floor applied to the second argument of [`kl_divergence`].
pub const KL_FLOOR: f64 = 1e-12;

/// A probability vector together with the temperature that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftenedDistribution<S> {
    pub probs: Vec<S>,
    pub temperature: f64,
}

/// `σ_i = exp(z_i / T) / Σ_j exp(z_j / T)`.
pub fn tempered_softmax<S: Scalar>(logits: &[S], temperature: f64) -> Result<SoftenedDistribution<S>, NnError> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(NnError::Domain(format!("temperature must be > 0, got {temperature}")));
    }
    if logits.is_empty() {
        return Err(NnError::Domain("softmax over zero classes".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite("logits".into()));
    }
    Ok(SoftenedDistribution { probs: softmax_unchecked(logits, S::of(temperature)), temperature })
}

/// Plain softmax (`T = 1`).
pub fn softmax<S: Scalar>(logits: &[S]) -> Result<Vec<S>, NnError> {
    tempered_softmax(logits, 1.0).map(|d| d.probs)
}

pub(crate) fn softmax_unchecked<S: Scalar>(logits: &[S], temperature: S) -> Vec<S> {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let mut out: Vec<S> = logits.iter().map(|&z| ((z - max) / temperature).exp()).collect();
    let total: S = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p = *p / total);
    out
}

/// `−ln p[label]`.
pub fn cross_entropy<S: Scalar>(probs: &[S], label: usize) -> Result<S, NnError> {
    let p =
        probs.get(label).ok_or_else(|| NnError::Domain(format!("label {label} outside {} classes", probs.len())))?;
    Ok(-p.ln())
}

/// Cross-entropy of `softmax(logits)` against a hard label, with its gradient
/// w.r.t. the logits, `softmax(logits) − onehot(label)`.
pub fn cross_entropy_with_logits<S: Scalar>(logits: &[S], label: usize) -> Result<(S, Vec<S>), NnError> {
    if label >= logits.len() {
        return Err(NnError::Domain(format!("label {label} outside {} classes", logits.len())));
    }
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let sum_exp: S = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_norm = max + sum_exp.ln();
    let loss = log_norm - logits[label];
    let mut grad: Vec<S> = logits.iter().map(|&z| (z - log_norm).exp()).collect();
    grad[label] = grad[label] - S::one();
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlDivergence<S> {
    pub value: S,
    /// True when some entry of `q` had to be raised to [`KL_FLOOR`].
    pub clamped: bool,
}

/// `KL(p ‖ q) = Σ p_i ln(p_i / q_i)`, with `0·ln 0 = 0`.
pub fn kl_divergence<S: Scalar>(p: &[S], q: &[S]) -> Result<KlDivergence<S>, NnError> {
    if p.len() != q.len() {
        return Err(NnError::Shape(format!("KL over lengths {} and {}", p.len(), q.len())));
    }
    let floor = S::of(KL_FLOOR);
    let mut clamped = false;
    let mut value = S::zero();
    for (&pi, &qi) in p.iter().zip(q) {
        let qi = if qi < floor {
            clamped = true;
            floor
        } else {
            qi
        };
        if pi > S::zero() {
            value = value + pi * (pi / qi).ln();
        }
    }
    if clamped {
        log::debug!("KL divergence clamped a zero entry of q");
    }
    // rounding can leave a tiny negative sum for near-identical inputs
    if value < S::zero() {
        value = S::zero();
    }
    Ok(KlDivergence { value, clamped })
}

/// Gradient of `KL(teacher ‖ softmax(z / T))` w.r.t. `z`, the teacher held fixed:
/// `(softmax(z / T) − teacher) / T`.
pub fn kl_grad_wrt_student_logits<S: Scalar>(teacher: &[S], student: &[S], temperature: f64) -> Vec<S> {
    let t = S::of(temperature);
    student.iter().zip(teacher).map(|(&q, &p)| (q - p) / t).collect()
}
