//! The X-volution block: a parallel static-convolution branch and a
//! pixel-shift self-attention branch during training, merged after training
//! into one dynamic convolution whose kernel is part trained weights, part
//! content-dependent attention coefficients computed at run time.

use crate::attention::AttentionParams;
use crate::conv::{conv2d, ConvKernel};
use crate::dynconv::DynamicKernelField;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::norm::{batchnorm, fold_bn_into_conv, BatchNormParams};
use crate::pssa::{embed_1x1, pssa_forward, MixOp, PssaConfig, PssaParams};
use crate::tensor::{add, ShiftOffset, Tensor4};

/// Training-time parameters: a 3x3 convolution paralleled with a dilated
/// 5x5 convolution (stride 1, dilation 2) plus shared branch normalization,
/// and one pixel-shift self-attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct XvolutionTrainParams {
    pub conv3: ConvKernel,
    pub conv5d: ConvKernel,
    pub conv_bn: BatchNormParams,
    pub pssa: PssaParams,
    pub pssa_cfg: PssaConfig,
}

impl XvolutionTrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.conv3.c_in() != self.conv5d.c_in() || self.conv3.c_out() != self.conv5d.c_out() {
            return Err(Error::InvalidParam(
                "static branch kernels must map identical channel counts".into(),
            ));
        }
        if self.conv_bn.channels() != self.conv3.c_out() {
            return Err(Error::ChannelMismatch {
                context: "xvolution conv_bn",
                expected: self.conv3.c_out(),
                got: self.conv_bn.channels(),
            });
        }
        if self.pssa.c_out() != self.conv3.c_out() {
            return Err(Error::ChannelMismatch {
                context: "xvolution pssa branch output",
                expected: self.conv3.c_out(),
                got: self.pssa.c_out(),
            });
        }
        if self.pssa.attn.c_in() != self.conv3.c_in() {
            return Err(Error::ChannelMismatch {
                context: "xvolution pssa branch input",
                expected: self.conv3.c_in(),
                got: self.pssa.attn.c_in(),
            });
        }
        Ok(())
    }
}

/// Inference-time parameters after re-parameterization. The static kernel
/// carries zero bias; all additive terms are merged into `bias`. `value`
/// holds one folded `(c_out, c_in)` matrix per offset: the mix weights for
/// that offset composed with the value embedding and the branch BN scale.
#[derive(Debug, Clone, PartialEq)]
pub struct XvolutionInferParams {
    pub static_kern: ConvKernel,
    pub value: Vec<Matrix>,
    pub wq: Matrix,
    pub wk: Matrix,
    pub offsets: Vec<ShiftOffset>,
    pub bias: Vec<f32>,
}

/// Branch-sum training forward: the attention approximation plus the
/// normalized sum of both static convolutions.
pub fn xvolution_train_forward(x: &Tensor4, p: &XvolutionTrainParams) -> Result<Tensor4> {
    p.validate()?;
    let attn_branch = pssa_forward(x, &p.pssa, &p.pssa_cfg)?;
    let conv_branch = batchnorm(
        &add(&conv2d(x, &p.conv3)?, &conv2d(x, &p.conv5d)?)?,
        &p.conv_bn,
    )?;
    add(&attn_branch, &conv_branch)
}

/// Merge two parallel stride-1 same-padded kernels and their shared BN into
/// a single kernel whose extent covers both dilated windows. For the 3x3 +
/// dilation-2 5x5 pair this is a 9x9 kernel: the 3x3 weights sit in the
/// center, the 5x5 weights at offsets {-4,-2,0,2,4}.
pub fn merge_static_branch(
    conv3: &ConvKernel,
    conv5d: &ConvKernel,
    bn: &BatchNormParams,
) -> Result<ConvKernel> {
    if conv3.c_in() != conv5d.c_in() || conv3.c_out() != conv5d.c_out() {
        return Err(Error::InvalidParam(
            "merge_static_branch: kernels must map identical channel counts".into(),
        ));
    }
    for (name, k) in [("first", conv3), ("second", conv5d)] {
        if !k.is_same_mode() {
            return Err(Error::NotReparameterizable(format!(
                "{name} kernel must be stride-1 with same padding"
            )));
        }
    }
    let span = |k: &ConvKernel| k.dilation() * (k.k() - 1);
    let merged_k = span(conv3).max(span(conv5d)) + 1;
    let radius = (merged_k - 1) as i64 / 2;
    let (c_out, c_in) = (conv3.c_out(), conv3.c_in());
    let mut merged = ConvKernel::zeros_same(c_out, c_in, merged_k, 1)?;
    for kern in [conv3, conv5d] {
        let r = (kern.k() - 1) as i64 / 2;
        let dil = kern.dilation() as i64;
        for o in 0..c_out {
            for ci in 0..c_in {
                for ki in 0..kern.k() as i64 {
                    for kj in 0..kern.k() as i64 {
                        let (di, dj) = ((ki - r) * dil, (kj - r) * dil);
                        let (ti, tj) = ((di + radius) as usize, (dj + radius) as usize);
                        let v = merged.w_at(o, ci, ti, tj) + kern.w_at(o, ci, ki as usize, kj as usize);
                        merged.w_set(o, ci, ti, tj, v);
                    }
                }
            }
        }
    }
    for o in 0..c_out {
        merged.bias_mut()[o] = conv3.bias()[o] + conv5d.bias()[o];
    }
    fold_bn_into_conv(&merged, bn)
}

/// Content-dependent coefficients: for every output position and offset, the
/// channel-summed inner product of the query embedding at the position with
/// the key embedding at the offset neighbor. Out-of-bounds neighbors get 0.
pub fn attention_field(
    x: &Tensor4,
    wq: &Matrix,
    wk: &Matrix,
    offsets: &[ShiftOffset],
) -> Result<DynamicKernelField> {
    let (n, _, h, w) = x.dims();
    let q = embed_1x1(x, wq)?;
    let k = embed_1x1(x, wk)?;
    let c_emb = q.c();
    let mut coeff = vec![0.0f32; n * h * w * offsets.len()];
    let mut field = DynamicKernelField::new(n, h, w, offsets.to_vec(), coeff.clone())?;
    for ni in 0..n {
        for i in 0..h as i64 {
            for j in 0..w as i64 {
                for (oi, off) in offsets.iter().enumerate() {
                    let (si, sj) = (i - off.dy as i64, j - off.dx as i64);
                    if si < 0 || si >= h as i64 || sj < 0 || sj >= w as i64 {
                        continue;
                    }
                    let mut acc = 0.0f64;
                    for e in 0..c_emb {
                        acc += q.at(ni, e, i as usize, j as usize) as f64
                            * k.at(ni, e, si as usize, sj as usize) as f64;
                    }
                    field.coeff_set(ni, i as usize, j as usize, oi, acc as f32);
                }
            }
        }
    }
    coeff.clear();
    Ok(field)
}

fn require_reduce_compatible(p: &XvolutionTrainParams) -> Result<()> {
    if !p.pssa_cfg.channel_reduce && p.pssa.attn.c_emb() != 1 {
        return Err(Error::NotReparameterizable(
            "attention branch must use channel-reduced similarities (or a single \
             embedding channel) so the dynamic kernel is a scalar per offset"
                .into(),
        ));
    }
    Ok(())
}

/// Convert trained branch parameters into the single dynamic-convolution
/// form. Requires stride-1 same-padded kernels, inference-mode BN and
/// channel-reduced attention similarities; rejects anything else.
///
/// The forward built from the result reproduces the training forward
/// algebraically; the documented tolerance only covers float reordering.
pub fn reparameterize(p: &XvolutionTrainParams) -> Result<XvolutionInferParams> {
    p.validate()?;
    require_reduce_compatible(p)?;
    if let MixOp::Conv(mix) = &p.pssa.mix {
        if mix.k() != 1 {
            return Err(Error::NotReparameterizable(
                "mix must be a 1x1 convolution".into(),
            ));
        }
    }
    let mut static_kern = merge_static_branch(&p.conv3, &p.conv5d, &p.conv_bn)?;
    let offsets = p.pssa_cfg.offsets()?;
    let c_out = p.pssa.c_out();
    let c_in = p.pssa.attn.c_in();
    let c_emb = p.pssa.attn.c_emb();
    let bn = &p.pssa.bn;

    // fold mix weights, value embedding and BN scale into one matrix per offset
    let mut value = Vec::with_capacity(offsets.len());
    for oi in 0..offsets.len() {
        let mut m = Matrix::zeros(c_out, c_in);
        for o in 0..c_out {
            let g = bn.scale(o);
            for ci in 0..c_in {
                let mut acc = 0.0f64;
                for e in 0..c_emb {
                    let mix_w = match &p.pssa.mix {
                        MixOp::Conv(mix) => mix.w_at(o, oi * c_emb + e, 0, 0) as f64,
                        MixOp::Sum => {
                            if o == e {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    acc += mix_w * p.pssa.attn.wv.at(e, ci) as f64;
                }
                m.set(o, ci, (g * acc) as f32);
            }
        }
        value.push(m);
    }

    // additive constants: folded static bias plus the attention branch's
    // mix bias and BN offset
    let mut bias = vec![0.0f32; c_out];
    for o in 0..c_out {
        let mix_bias = match &p.pssa.mix {
            MixOp::Conv(mix) => mix.bias()[o] as f64,
            MixOp::Sum => 0.0,
        };
        bias[o] =
            (static_kern.bias()[o] as f64 + bn.scale(o) * mix_bias + bn.offset(o)) as f32;
    }
    static_kern.bias_mut().fill(0.0);

    Ok(XvolutionInferParams {
        static_kern,
        value,
        wq: p.pssa.attn.wq.clone(),
        wk: p.pssa.attn.wk.clone(),
        offsets,
        bias,
    })
}

/// Single fused pass over positions and offsets: the attention field is the
/// only intermediate of field size, plus the query/key maps — no per-branch
/// output tensors are materialized.
pub fn xvolution_infer_forward(x: &Tensor4, ip: &XvolutionInferParams) -> Result<Tensor4> {
    let (n, c, h, w) = x.dims();
    if ip.static_kern.c_in() != c {
        return Err(Error::ChannelMismatch {
            context: "xvolution_infer_forward",
            expected: ip.static_kern.c_in(),
            got: c,
        });
    }
    if !ip.static_kern.is_same_mode() {
        return Err(Error::NotReparameterizable(
            "merged kernel must be stride-1 with same padding".into(),
        ));
    }
    let c_out = ip.static_kern.c_out();
    if ip.value.len() != ip.offsets.len() || ip.bias.len() != c_out {
        return Err(Error::InvalidParam(
            "inference bundle has inconsistent value/bias shapes".into(),
        ));
    }
    let field = attention_field(x, &ip.wq, &ip.wk, &ip.offsets)?;
    let kk = ip.static_kern.k() as i64;
    let r = (kk - 1) / 2;
    let mut out = Tensor4::zeros(n, c_out, h, w);
    let mut acc = vec![0.0f64; c_out];
    for ni in 0..n {
        for i in 0..h as i64 {
            for j in 0..w as i64 {
                for (o, a) in acc.iter_mut().enumerate() {
                    *a = ip.bias[o] as f64;
                }
                // trained, solidified taps
                for ci in 0..c {
                    for ki in 0..kk {
                        let src_i = i + ki - r;
                        if src_i < 0 || src_i >= h as i64 {
                            continue;
                        }
                        for kj in 0..kk {
                            let src_j = j + kj - r;
                            if src_j < 0 || src_j >= w as i64 {
                                continue;
                            }
                            let xv = x.at(ni, ci, src_i as usize, src_j as usize) as f64;
                            for (o, a) in acc.iter_mut().enumerate() {
                                *a += ip.static_kern.w_at(o, ci, ki as usize, kj as usize) as f64
                                    * xv;
                            }
                        }
                    }
                }
                // dynamically calculated taps
                for (oi, off) in ip.offsets.iter().enumerate() {
                    let (si, sj) = (i - off.dy as i64, j - off.dx as i64);
                    if si < 0 || si >= h as i64 || sj < 0 || sj >= w as i64 {
                        continue;
                    }
                    let coeff = field.coeff_at(ni, i as usize, j as usize, oi) as f64;
                    let vm = &ip.value[oi];
                    for (o, a) in acc.iter_mut().enumerate() {
                        let mut vx = 0.0f64;
                        for ci in 0..c {
                            vx += vm.at(o, ci) as f64
                                * x.at(ni, ci, si as usize, sj as usize) as f64;
                        }
                        *a += coeff * vx;
                    }
                }
                for (o, a) in acc.iter().enumerate() {
                    out.set(ni, o, i as usize, j as usize, *a as f32);
                }
            }
        }
    }
    Ok(out)
}
