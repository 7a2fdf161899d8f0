use super::tensor::{Scalar, Tensor};
use super::NnError;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight kept on the old running statistics at each update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalisation; statistics pool the batch and time axes.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<S> {
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    /// Set once running statistics have absorbed at least one training batch.
    pub calibrated: bool,
}

#[derive(Debug, Clone)]
pub struct BnCache<S> {
    xhat: Vec<S>,
    inv_std: Vec<S>,
    batch_mean: Vec<S>,
    batch_var: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct BnGrads<S> {
    pub input: Tensor<S>,
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
}

impl<S: Scalar> BatchNorm<S> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![S::one(); channels],
            beta: vec![S::zero(); channels],
            running_mean: vec![S::zero(); channels],
            running_var: vec![S::one(); channels],
            calibrated: false,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn rows(&self, input: &Tensor<S>) -> Result<usize, NnError> {
        let (b, t, c) = input.dims3()?;
        if c != self.channels() {
            return Err(NnError::Shape(format!("batch norm over {} channels got {c}", self.channels())));
        }
        Ok(b * t)
    }

    pub fn forward_train(&self, input: &Tensor<S>) -> Result<(Tensor<S>, BnCache<S>), NnError> {
        let rows = self.rows(input)?;
        let c = self.channels();
        let x = input.data();
        let n = S::of(rows as f64);
        let eps = S::of(BN_EPSILON);

        let mut mean = vec![S::zero(); c];
        for r in 0..rows {
            for (m, &v) in mean.iter_mut().zip(&x[r * c..(r + 1) * c]) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        let mut var = vec![S::zero(); c];
        for r in 0..rows {
            for ((acc, &v), &m) in var.iter_mut().zip(&x[r * c..(r + 1) * c]).zip(&mean) {
                let d = v - m;
                *acc = *acc + d * d;
            }
        }
        var.iter_mut().for_each(|v| *v = *v / n);
        let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();

        let mut xhat = vec![S::zero(); rows * c];
        let mut out = vec![S::zero(); rows * c];
        for r in 0..rows {
            for ch in 0..c {
                let i = r * c + ch;
                let h = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = h;
                out[i] = self.gamma[ch] * h + self.beta[ch];
            }
        }
        Ok((Tensor::new(input.shape().to_vec(), out)?, BnCache { xhat, inv_std, batch_mean: mean, batch_var: var }))
    }

    /// Normalises with running statistics. Before any training step those are
    /// the initial mean 0 / variance 1, and the call logs a warning.
    pub fn forward_infer(&self, input: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let rows = self.rows(input)?;
        if !self.calibrated {
            log::warn!("batch norm used in inference mode before any training step");
        }
        let c = self.channels();
        let eps = S::of(BN_EPSILON);
        let scale: Vec<S> = (0..c).map(|ch| self.gamma[ch] / (self.running_var[ch] + eps).sqrt()).collect();
        let x = input.data();
        let mut out = vec![S::zero(); rows * c];
        for r in 0..rows {
            for ch in 0..c {
                let i = r * c + ch;
                out[i] = (x[i] - self.running_mean[ch]) * scale[ch] + self.beta[ch];
            }
        }
        Tensor::new(input.shape().to_vec(), out)
    }

    pub fn update_running(&mut self, cache: &BnCache<S>) {
        let keep = S::of(BN_MOMENTUM);
        let take = S::one() - keep;
        for ch in 0..self.channels() {
            self.running_mean[ch] = keep * self.running_mean[ch] + take * cache.batch_mean[ch];
            self.running_var[ch] = keep * self.running_var[ch] + take * cache.batch_var[ch];
        }
        self.calibrated = true;
    }

    pub fn backward(&self, cache: &BnCache<S>, grad_out: &Tensor<S>) -> Result<BnGrads<S>, NnError> {
        let rows = self.rows(grad_out)?;
        let c = self.channels();
        if cache.xhat.len() != rows * c {
            return Err(NnError::Shape("batch norm cache does not match gradient".into()));
        }
        let dy = grad_out.data();
        let mut gamma = vec![S::zero(); c];
        let mut beta = vec![S::zero(); c];
        for r in 0..rows {
            for ch in 0..c {
                let i = r * c + ch;
                beta[ch] = beta[ch] + dy[i];
                gamma[ch] = gamma[ch] + dy[i] * cache.xhat[i];
            }
        }
        // dx = γ/σ · (dy − mean(dy) − x̂·mean(dy·x̂))
        let n = S::of(rows as f64);
        let mut dx = vec![S::zero(); rows * c];
        for r in 0..rows {
            for ch in 0..c {
                let i = r * c + ch;
                dx[i] = self.gamma[ch] * cache.inv_std[ch] * (dy[i] - beta[ch] / n - cache.xhat[i] * gamma[ch] / n);
            }
        }
        Ok(BnGrads { input: Tensor::new(grad_out.shape().to_vec(), dx)?, gamma, beta })
    }
}
