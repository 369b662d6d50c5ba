//! Seeded random construction of tensors and operator parameters.
//!
//! Shared by the unit tests, the property suites and the verification
//! harness so every randomized case is reproducible from a single seed.
//! Weight magnitudes are scaled by fan-in to keep activations O(1).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::attention::AttentionParams;
use crate::block::XvolutionTrainParams;
use crate::conv::{conv2d, ConvKernel};
use crate::matrix::Matrix;
use crate::norm::BatchNormParams;
use crate::pssa::{MixOp, PssaConfig, PssaParams, COMPASS_DIRECTIONS};
use crate::tensor::Tensor4;

pub fn tensor_in(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize, lo: f32, hi: f32) -> Tensor4 {
    let data: Vec<f32> = (0..n * c * h * w).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor4::from_vec(n, c, h, w, data).unwrap()
}

/// Uniform values in [-1, 1).
pub fn tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor4 {
    tensor_in(rng, n, c, h, w, -1.0, 1.0)
}

pub fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let scale = 1.0 / (cols as f32).sqrt();
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect(),
    )
    .unwrap()
}

pub fn conv_kernel_same(
    rng: &mut ChaCha8Rng,
    c_out: usize,
    c_in: usize,
    k: usize,
    dilation: usize,
) -> ConvKernel {
    let scale = 1.0 / ((c_in * k * k) as f32).sqrt();
    let weight: Vec<f32> = (0..c_out * c_in * k * k)
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    let bias: Vec<f32> = (0..c_out).map(|_| rng.gen_range(-0.2..0.2)).collect();
    ConvKernel::same(c_out, c_in, k, weight, bias, dilation).unwrap()
}

pub fn batchnorm_params(rng: &mut ChaCha8Rng, c: usize) -> BatchNormParams {
    BatchNormParams::new(
        (0..c).map(|_| rng.gen_range(0.5..1.5)).collect(),
        (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        (0..c).map(|_| rng.gen_range(0.25..1.5)).collect(),
        1e-5,
    )
    .unwrap()
}

pub fn attention_params(rng: &mut ChaCha8Rng, c_emb: usize, c_in: usize) -> AttentionParams {
    AttentionParams::new(
        matrix(rng, c_emb, c_in),
        matrix(rng, c_emb, c_in),
        matrix(rng, c_emb, c_in),
    )
    .unwrap()
}

/// Shift lengths from the usual {1,3,5} ladder capped at `max_shift`.
pub fn shift_lengths(max_shift: usize) -> Vec<usize> {
    let lengths: Vec<usize> = [1usize, 3, 5]
        .into_iter()
        .filter(|l| *l <= max_shift)
        .collect();
    if lengths.is_empty() {
        vec![1]
    } else {
        lengths
    }
}

pub fn pssa_config(max_shift: usize, channel_reduce: bool) -> PssaConfig {
    PssaConfig {
        shift_lengths: shift_lengths(max_shift),
        directions: COMPASS_DIRECTIONS.to_vec(),
        include_identity: true,
        stack_depth: 1,
        channel_reduce,
    }
}

pub fn pssa_params(
    rng: &mut ChaCha8Rng,
    c_in: usize,
    c_out: usize,
    cfg: &PssaConfig,
) -> PssaParams {
    let c_emb = c_in;
    let n_off = cfg.offsets().unwrap().len();
    let mix = conv_kernel_same(rng, c_out, n_off * c_emb, 1, 1);
    PssaParams {
        attn: attention_params(rng, c_emb, c_in),
        mix: MixOp::Conv(mix),
        bn: batchnorm_params(rng, c_out),
    }
}

pub fn xvolution_train_params(
    rng: &mut ChaCha8Rng,
    c_in: usize,
    c_out: usize,
    max_shift: usize,
    channel_reduce: bool,
) -> XvolutionTrainParams {
    let cfg = pssa_config(max_shift, channel_reduce);
    XvolutionTrainParams {
        conv3: conv_kernel_same(rng, c_out, c_in, 3, 1),
        conv5d: conv_kernel_same(rng, c_out, c_in, 5, 2),
        conv_bn: batchnorm_params(rng, c_out),
        pssa: pssa_params(rng, c_in, c_out, &cfg),
        pssa_cfg: cfg,
    }
}

/// White noise blurred by a per-channel 5x5 Gaussian, then standardized to
/// zero mean and unit variance per channel. Gives spatially correlated
/// fields the attention comparisons run on.
pub fn smooth_field(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor4 {
    let noise = tensor(rng, 1, c, h, w);
    let sigma = 1.2f64;
    let mut g = [0.0f32; 25];
    let mut sum = 0.0f64;
    for (idx, gv) in g.iter_mut().enumerate() {
        let (di, dj) = ((idx / 5) as f64 - 2.0, (idx % 5) as f64 - 2.0);
        let v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
        *gv = v as f32;
        sum += v;
    }
    for gv in g.iter_mut() {
        *gv /= sum as f32;
    }
    // depthwise blur as a block-diagonal dense kernel
    let mut weight = vec![0.0f32; c * c * 25];
    for ch in 0..c {
        for t in 0..25 {
            weight[(ch * c + ch) * 25 + t] = g[t];
        }
    }
    let blur = ConvKernel::same(c, c, 5, weight, vec![0.0; c], 1).unwrap();
    let mut field = conv2d(&noise, &blur).unwrap();
    for ch in 0..c {
        let mut mean = 0.0f64;
        let mut var = 0.0f64;
        let m = (h * w) as f64;
        for i in 0..h {
            for j in 0..w {
                mean += field.at(0, ch, i, j) as f64;
            }
        }
        mean /= m;
        for i in 0..h {
            for j in 0..w {
                let d = field.at(0, ch, i, j) as f64 - mean;
                var += d * d;
            }
        }
        var /= m;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        for i in 0..h {
            for j in 0..w {
                let v = ((field.at(0, ch, i, j) as f64 - mean) * scale) as f32;
                field.set(0, ch, i, j, v);
            }
        }
    }
    field
}
