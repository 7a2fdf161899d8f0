use rand::Rng;

use super::tensor::{gemm, MatRef, Scalar, Tensor};
use super::NnError;

pub fn relu<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    let data = input.data().iter().map(|&v| v.max(S::zero())).collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

/// Gradient passes where the forward input was strictly positive.
pub fn relu_backward<S: Scalar>(input: &Tensor<S>, grad_out: &Tensor<S>) -> Result<Tensor<S>, NnError> {
    if input.shape() != grad_out.shape() {
        return Err(NnError::Shape("relu gradient shape mismatch".into()));
    }
    let data =
        input.data().iter().zip(grad_out.data()).map(|(&x, &g)| if x > S::zero() { g } else { S::zero() }).collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Mean over the time axis: `[B, T, C] → [B, C]`.
pub fn global_avg_pool<S: Scalar>(input: &Tensor<S>) -> Result<Tensor<S>, NnError> {
    let (b, t, c) = input.dims3()?;
    let x = input.data();
    let scale = S::one() / S::of(t as f64);
    let mut out = vec![S::zero(); b * c];
    for bi in 0..b {
        let acc = &mut out[bi * c..(bi + 1) * c];
        for ti in 0..t {
            for (a, &v) in acc.iter_mut().zip(&x[(bi * t + ti) * c..(bi * t + ti + 1) * c]) {
                *a = *a + v;
            }
        }
        acc.iter_mut().for_each(|a| *a = *a * scale);
    }
    Tensor::new(vec![b, c], out)
}

pub fn global_avg_pool_backward<S: Scalar>(grad_out: &Tensor<S>, t: usize) -> Result<Tensor<S>, NnError> {
    let (b, c) = grad_out.dims2()?;
    let scale = S::one() / S::of(t as f64);
    let g = grad_out.data();
    let mut out = Vec::with_capacity(b * t * c);
    for bi in 0..b {
        for _ in 0..t {
            out.extend(g[bi * c..(bi + 1) * c].iter().map(|&v| v * scale));
        }
    }
    Tensor::new(vec![b, t, c], out)
}

/// Fully connected layer, `weight` is `[in, out]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S> {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct LinearGrads<S> {
    pub input: Tensor<S>,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weight: vec![S::zero(); in_features * out_features],
            bias: vec![S::zero(); out_features],
        }
    }

    pub fn init_kaiming<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan_in = self.in_features as f64;
        let w_bound = (6.0 / fan_in).sqrt();
        let b_bound = 1.0 / fan_in.sqrt();
        for w in &mut self.weight {
            *w = S::of(rng.random_range(-w_bound..w_bound));
        }
        for b in &mut self.bias {
            *b = S::of(rng.random_range(-b_bound..b_bound));
        }
    }

    pub fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let (b, d) = input.dims2()?;
        if d != self.in_features {
            return Err(NnError::Shape(format!("linear expects {} features, got {d}", self.in_features)));
        }
        let mut out = Vec::with_capacity(b * self.out_features);
        for _ in 0..b {
            out.extend_from_slice(&self.bias);
        }
        gemm(
            S::one(),
            MatRef::row_major(input.data(), b, d),
            MatRef::row_major(&self.weight, d, self.out_features),
            S::one(),
            &mut out,
        );
        Tensor::new(vec![b, self.out_features], out)
    }

    pub fn backward(&self, input: &Tensor<S>, grad_out: &Tensor<S>) -> Result<LinearGrads<S>, NnError> {
        let (b, d) = input.dims2()?;
        let n = self.out_features;
        if grad_out.shape() != [b, n] {
            return Err(NnError::Shape("linear gradient shape mismatch".into()));
        }
        let mut weight = vec![S::zero(); d * n];
        gemm(
            S::one(),
            MatRef::transposed(input.data(), b, d),
            MatRef::row_major(grad_out.data(), b, n),
            S::zero(),
            &mut weight,
        );
        let mut bias = vec![S::zero(); n];
        for bi in 0..b {
            for (acc, &g) in bias.iter_mut().zip(grad_out.row(bi)) {
                *acc = *acc + g;
            }
        }
        let mut dx = vec![S::zero(); b * d];
        gemm(
            S::one(),
            MatRef::row_major(grad_out.data(), b, n),
            MatRef::transposed(&self.weight, d, n),
            S::zero(),
            &mut dx,
        );
        Ok(LinearGrads { input: Tensor::new(vec![b, d], dx)?, weight, bias })
    }
}
