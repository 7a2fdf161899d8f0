//! Temporal (1-D) convolution over `[batch, time, channels]` tensors.
//!
//! Forward and backward both go through an explicit im2col buffer so the heavy
//! lifting is three dense matrix products per layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, MatRef, Scalar, Tensor};
use super::NnError;

/// Filter count, kernel width (time axis) and stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(filters: usize, kernel: usize, stride: usize) -> Result<Self, NnError> {
        if filters == 0 || kernel == 0 || stride == 0 {
            return Err(NnError::Config(format!(
                "conv spec needs F, K, S >= 1 (got F={filters}, K={kernel}, S={stride})"
            )));
        }
        Ok(Self { filters, kernel, stride })
    }
}

/// Zero padding applied to the time axis before the convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const VALID: Padding = Padding { left: 0, right: 0 };

    /// Pads `kernel - 1` frames in total so that stride 1 keeps the length.
    /// The extra frame of an even kernel goes to the right.
    pub fn same(kernel: usize) -> Self {
        let total = kernel.saturating_sub(1);
        Padding { left: total / 2, right: total - total / 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<S> {
    pub spec: ConvSpec,
    pub in_channels: usize,
    pub padding: Padding,
    /// `[K, C_in, F]`, row-major, so it reads as a `(K·C_in) × F` matrix.
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<S> {
    pub input: Option<Tensor<S>>,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Conv1d<S> {
    /// Zero-initialised layer.
    pub fn new(in_channels: usize, spec: ConvSpec, padding: Padding) -> Result<Self, NnError> {
        let spec = ConvSpec::new(spec.filters, spec.kernel, spec.stride)?;
        if in_channels == 0 {
            return Err(NnError::Config("conv needs at least one input channel".into()));
        }
        Ok(Self {
            spec,
            in_channels,
            padding,
            weight: vec![S::zero(); spec.kernel * in_channels * spec.filters],
            bias: vec![S::zero(); spec.filters],
        })
    }

    /// Kaiming-uniform over the fan-in `K·C_in`; biases drawn from the same bound.
    pub fn init_kaiming<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan_in = (self.spec.kernel * self.in_channels) as f64;
        let w_bound = (6.0 / fan_in).sqrt();
        let b_bound = 1.0 / fan_in.sqrt();
        for w in &mut self.weight {
            *w = S::of(rng.random_range(-w_bound..w_bound));
        }
        for b in &mut self.bias {
            *b = S::of(rng.random_range(-b_bound..b_bound));
        }
    }

    fn patch_width(&self) -> usize {
        self.spec.kernel * self.in_channels
    }

    /// `floor((T + pad − K) / S) + 1`.
    pub fn output_len(&self, t: usize) -> Result<usize, NnError> {
        let padded = t + self.padding.left + self.padding.right;
        if self.spec.kernel > padded {
            return Err(NnError::Shape(format!("kernel {} longer than padded sequence {padded}", self.spec.kernel)));
        }
        Ok((padded - self.spec.kernel) / self.spec.stride + 1)
    }

    fn check_input(&self, input: &Tensor<S>) -> Result<(usize, usize, usize), NnError> {
        let (b, t, c) = input.dims3()?;
        if c != self.in_channels {
            return Err(NnError::Shape(format!("conv expects {} input channels, got {c}", self.in_channels)));
        }
        Ok((b, t, self.output_len(t)?))
    }

    /// Rows are output positions of every sample, columns are the flattened
    /// `(k, c)` receptive field; out-of-range frames read as zero.
    fn im2col(&self, input: &Tensor<S>, b: usize, t: usize, t_out: usize) -> Vec<S> {
        let c = self.in_channels;
        let mut cols = Vec::with_capacity(b * t_out * self.patch_width());
        let src = input.data();
        for bi in 0..b {
            for to in 0..t_out {
                for k in 0..self.spec.kernel {
                    let ti = (to * self.spec.stride + k) as isize - self.padding.left as isize;
                    if ti < 0 || ti as usize >= t {
                        cols.extend(std::iter::repeat_n(S::zero(), c));
                    } else {
                        let from = (bi * t + ti as usize) * c;
                        cols.extend_from_slice(&src[from..from + c]);
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        Ok(self.forward_keep_cols(input)?.0)
    }

    /// Forward pass that also hands back the im2col buffer, which
    /// [`Conv1d::backward_with_cols`] accepts in place of the input.
    pub fn forward_keep_cols(&self, input: &Tensor<S>) -> Result<(Tensor<S>, Vec<S>), NnError> {
        let (b, t, t_out) = self.check_input(input)?;
        let f = self.spec.filters;
        let cols = self.im2col(input, b, t, t_out);
        let rows = b * t_out;
        let mut out = Vec::with_capacity(rows * f);
        for _ in 0..rows {
            out.extend_from_slice(&self.bias);
        }
        gemm(
            S::one(),
            MatRef::row_major(&cols, rows, self.patch_width()),
            MatRef::row_major(&self.weight, self.patch_width(), f),
            S::one(),
            &mut out,
        );
        Ok((Tensor::new(vec![b, t_out, f], out)?, cols))
    }

    /// Exact gradients of a scalar loss given `∂L/∂output`.
    pub fn backward(
        &self,
        input: &Tensor<S>,
        grad_out: &Tensor<S>,
        need_input_grad: bool,
    ) -> Result<ConvGrads<S>, NnError> {
        let (b, t, t_out) = self.check_input(input)?;
        let cols = self.im2col(input, b, t, t_out);
        self.backward_with_cols(&cols, input.shape(), grad_out, need_input_grad)
    }

    pub fn backward_with_cols(
        &self,
        cols: &[S],
        input_shape: &[usize],
        grad_out: &Tensor<S>,
        need_input_grad: bool,
    ) -> Result<ConvGrads<S>, NnError> {
        let &[b, t, c] = input_shape else {
            return Err(NnError::Shape(format!("conv input shape {input_shape:?} is not [B, T, C]")));
        };
        if c != self.in_channels {
            return Err(NnError::Shape(format!("conv expects {} input channels, got {c}", self.in_channels)));
        }
        let t_out = self.output_len(t)?;
        let f = self.spec.filters;
        if grad_out.shape() != [b, t_out, f] {
            return Err(NnError::Shape(format!(
                "conv grad_out {:?} does not match output [{b}, {t_out}, {f}]",
                grad_out.shape()
            )));
        }
        let rows = b * t_out;
        let width = self.patch_width();
        if cols.len() != rows * width {
            return Err(NnError::Shape(format!("im2col buffer has {} values, expected {}", cols.len(), rows * width)));
        }
        let dy = grad_out.data();

        let mut weight = vec![S::zero(); width * f];
        gemm(S::one(), MatRef::transposed(cols, rows, width), MatRef::row_major(dy, rows, f), S::zero(), &mut weight);
        let mut bias = vec![S::zero(); f];
        for r in 0..rows {
            for (acc, &g) in bias.iter_mut().zip(&dy[r * f..(r + 1) * f]) {
                *acc = *acc + g;
            }
        }

        let input_grad = if need_input_grad {
            let mut dcols = vec![S::zero(); rows * width];
            gemm(
                S::one(),
                MatRef::row_major(dy, rows, f),
                MatRef::transposed(&self.weight, width, f),
                S::zero(),
                &mut dcols,
            );
            let mut dx = vec![S::zero(); b * t * c];
            for bi in 0..b {
                for to in 0..t_out {
                    let row = &dcols[(bi * t_out + to) * width..(bi * t_out + to + 1) * width];
                    for k in 0..self.spec.kernel {
                        let ti = (to * self.spec.stride + k) as isize - self.padding.left as isize;
                        if ti < 0 || ti as usize >= t {
                            continue;
                        }
                        let dst = &mut dx[(bi * t + ti as usize) * c..(bi * t + ti as usize + 1) * c];
                        for (d, &g) in dst.iter_mut().zip(&row[k * c..(k + 1) * c]) {
                            *d = *d + g;
                        }
                    }
                }
            }
            Some(Tensor::new(vec![b, t, c], dx)?)
        } else {
            None
        };

        Ok(ConvGrads { input: input_grad, weight, bias })
    }
}
