//! Per-channel batch normalization (inference semantics) and its folding
//! into a preceding convolution.

use crate::conv::ConvKernel;
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub eps: f32,
}

impl BatchNormParams {
    pub fn new(
        gamma: Vec<f32>,
        beta: Vec<f32>,
        mean: Vec<f32>,
        var: Vec<f32>,
        eps: f32,
    ) -> Result<Self> {
        let c = gamma.len();
        if beta.len() != c || mean.len() != c || var.len() != c {
            return Err(Error::ShapeMismatch {
                context: "BatchNormParams::new",
                expected: format!("all vectors of length {c}"),
                got: format!("{}/{}/{}", beta.len(), mean.len(), var.len()),
            });
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidParam("bn eps must be > 0".into()));
        }
        if var.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidParam("bn variance must be >= 0".into()));
        }
        Ok(BatchNormParams {
            gamma,
            beta,
            mean,
            var,
            eps,
        })
    }

    /// gamma=1, beta=0, mean=0, var=1-eps: the transform is the identity.
    pub fn identity(c: usize, eps: f32) -> Self {
        BatchNormParams {
            gamma: vec![1.0; c],
            beta: vec![0.0; c],
            mean: vec![0.0; c],
            var: vec![1.0 - eps; c],
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Per-channel multiplier gamma / sqrt(var + eps).
    pub fn scale(&self, c: usize) -> f64 {
        self.gamma[c] as f64 / ((self.var[c] as f64 + self.eps as f64).sqrt())
    }

    /// Per-channel additive term beta - scale * mean.
    pub fn offset(&self, c: usize) -> f64 {
        self.beta[c] as f64 - self.scale(c) * self.mean[c] as f64
    }
}

/// Inference-mode normalization with the supplied running statistics.
pub fn batchnorm(x: &Tensor4, bn: &BatchNormParams) -> Result<Tensor4> {
    let (n, c, h, w) = x.dims();
    if c != bn.channels() {
        return Err(Error::ChannelMismatch {
            context: "batchnorm",
            expected: bn.channels(),
            got: c,
        });
    }
    let mut out = Tensor4::zeros(n, c, h, w);
    for ci in 0..c {
        let s = bn.scale(ci);
        let b = bn.offset(ci);
        for ni in 0..n {
            for i in 0..h {
                for j in 0..w {
                    let v = s * x.at(ni, ci, i, j) as f64 + b;
                    out.set(ni, ci, i, j, v as f32);
                }
            }
        }
    }
    Ok(out)
}

/// Absorb a per-channel affine normalization into the preceding kernel:
/// `conv2d(x, folded) == batchnorm(conv2d(x, kern), bn)` up to rounding.
pub fn fold_bn_into_conv(kern: &ConvKernel, bn: &BatchNormParams) -> Result<ConvKernel> {
    if bn.channels() != kern.c_out() {
        return Err(Error::ChannelMismatch {
            context: "fold_bn_into_conv",
            expected: kern.c_out(),
            got: bn.channels(),
        });
    }
    let mut folded = kern.clone();
    let (c_in, k) = (kern.c_in(), kern.k());
    for o in 0..kern.c_out() {
        let s = bn.scale(o);
        for ci in 0..c_in {
            for ki in 0..k {
                for kj in 0..k {
                    let v = (kern.w_at(o, ci, ki, kj) as f64 * s) as f32;
                    folded.w_set(o, ci, ki, kj, v);
                }
            }
        }
        folded.bias_mut()[o] =
            ((kern.bias()[o] as f64 - bn.mean[o] as f64) * s + bn.beta[o] as f64) as f32;
    }
    Ok(folded)
}
