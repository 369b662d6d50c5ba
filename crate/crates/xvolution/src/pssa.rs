//! Pixel-shift self-attention: a linear-cost stand-in for global attention.
//!
//! The feature map is shifted along eight compass directions at a set of
//! pixel distances, multiplied element-wise against the unshifted map after
//! query/key embedding, and the per-offset products are mixed by a learned
//! 1x1 convolution. Shift, product and mix are all O(n) in the pixel count.
//! Stacking layers grows the receptive field additively, which is what
//! propagates context toward the global extent.
//!
//! Offset ordering contract: offsets are enumerated direction-major,
//! clockwise starting from "up" (north), with shift lengths ascending within
//! each direction, and the identity offset (0,0) last when enabled. Mix
//! weights index offsets in exactly this order.

use crate::attention::AttentionParams;
use crate::conv::{conv2d, ConvKernel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::norm::{batchnorm, BatchNormParams};
use crate::tensor::{add, hadamard, shift2d, ShiftOffset, Tensor4};

/// The eight compass directions as unit `(dy, dx)` steps, clockwise from
/// north. `dy` grows downward.
pub const COMPASS_DIRECTIONS: [(i32, i32); 8] = [
    (-1, 0),  // N
    (-1, 1),  // NE
    (0, 1),   // E
    (1, 1),   // SE
    (1, 0),   // S
    (1, -1),  // SW
    (0, -1),  // W
    (-1, -1), // NW
];

#[derive(Debug, Clone, PartialEq)]
pub struct PssaConfig {
    /// Shift distances in pixels; strictly positive and distinct.
    pub shift_lengths: Vec<usize>,
    /// Unit direction steps; the default is the eight compass directions.
    pub directions: Vec<(i32, i32)>,
    /// Append the un-shifted (identity) offset as the final entry.
    pub include_identity: bool,
    /// Number of stacked layers the harness builds from this config.
    pub stack_depth: usize,
    /// When set, the query/key product is summed over embedding channels to
    /// a single similarity scalar per offset before weighting the value.
    /// When clear, products stay element-wise per channel.
    pub channel_reduce: bool,
}

impl Default for PssaConfig {
    fn default() -> Self {
        PssaConfig {
            shift_lengths: vec![1, 3, 5],
            directions: COMPASS_DIRECTIONS.to_vec(),
            include_identity: true,
            stack_depth: 1,
            channel_reduce: false,
        }
    }
}

impl PssaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stack_depth < 1 {
            return Err(Error::InvalidParam("stack_depth must be >= 1".into()));
        }
        for (i, l) in self.shift_lengths.iter().enumerate() {
            if *l == 0 {
                return Err(Error::InvalidParam("shift lengths must be > 0".into()));
            }
            if self.shift_lengths[..i].contains(l) {
                return Err(Error::InvalidParam(format!("duplicate shift length {l}")));
            }
        }
        if self.directions.is_empty() && !self.include_identity {
            return Err(Error::InvalidParam("empty offset set".into()));
        }
        Ok(())
    }

    /// The full offset table in the documented order.
    pub fn offsets(&self) -> Result<Vec<ShiftOffset>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.directions.len() * self.shift_lengths.len() + 1);
        for (dy, dx) in &self.directions {
            for l in &self.shift_lengths {
                out.push(ShiftOffset::new(dy * *l as i32, dx * *l as i32));
            }
        }
        if self.include_identity {
            out.push(ShiftOffset::new(0, 0));
        }
        Ok(out)
    }

    /// Largest configured shift distance (0 when only the identity is used).
    pub fn max_shift(&self) -> usize {
        self.shift_lengths.iter().copied().max().unwrap_or(0)
    }
}

/// How per-offset transformed features are combined into the layer output.
#[derive(Debug, Clone, PartialEq)]
pub enum MixOp {
    /// Learned weighted addition as a 1x1 convolution over the stacked
    /// per-offset channels.
    Conv(ConvKernel),
    /// Plain sum over offsets, for stacked use where the explicit weighting
    /// is omitted.
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PssaParams {
    /// Query/key/value 1x1 embeddings, shared spatially.
    pub attn: AttentionParams,
    pub mix: MixOp,
    pub bn: BatchNormParams,
}

impl PssaParams {
    /// Output channel count of one layer built from these params.
    pub fn c_out(&self) -> usize {
        match &self.mix {
            MixOp::Conv(k) => k.c_out(),
            MixOp::Sum => self.attn.c_emb(),
        }
    }

    fn validate(&self, cfg: &PssaConfig) -> Result<()> {
        let n_off = cfg.offsets()?.len();
        if let MixOp::Conv(k) = &self.mix {
            if k.k() != 1 || k.stride() != 1 || k.dilation() != 1 {
                return Err(Error::InvalidParam(
                    "mix kernel must be a stride-1 1x1 convolution".into(),
                ));
            }
            if k.c_in() != n_off * self.attn.c_emb() {
                return Err(Error::ChannelMismatch {
                    context: "pssa mix input",
                    expected: n_off * self.attn.c_emb(),
                    got: k.c_in(),
                });
            }
        }
        if self.bn.channels() != self.c_out() {
            return Err(Error::ChannelMismatch {
                context: "pssa bn",
                expected: self.c_out(),
                got: self.bn.channels(),
            });
        }
        Ok(())
    }
}

/// Apply a `(c_out, c_in)` matrix as a spatially shared 1x1 transform.
pub fn embed_1x1(x: &Tensor4, m: &Matrix) -> Result<Tensor4> {
    let (n, c, h, w) = x.dims();
    if m.cols() != c {
        return Err(Error::ChannelMismatch {
            context: "embed_1x1",
            expected: m.cols(),
            got: c,
        });
    }
    let c_out = m.rows();
    let mut out = Tensor4::zeros(n, c_out, h, w);
    for ni in 0..n {
        for e in 0..c_out {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = 0.0f64;
                    for ci in 0..c {
                        acc += m.at(e, ci) as f64 * x.at(ni, ci, i, j) as f64;
                    }
                    out.set(ni, e, i, j, acc as f32);
                }
            }
        }
    }
    Ok(out)
}

/// Sum over the channel axis to a single-channel map.
pub fn sum_channels(x: &Tensor4) -> Tensor4 {
    let (n, c, h, w) = x.dims();
    let mut out = Tensor4::zeros(n, 1, h, w);
    for ni in 0..n {
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0f64;
                for ci in 0..c {
                    acc += x.at(ni, ci, i, j) as f64;
                }
                out.set(ni, 0, i, j, acc as f32);
            }
        }
    }
    out
}

/// Multiply a single-channel map into every channel of `x`.
pub fn mul_broadcast_channel(scalar_map: &Tensor4, x: &Tensor4) -> Result<Tensor4> {
    let (n, sc, h, w) = scalar_map.dims();
    if sc != 1 || (n, h, w) != (x.n(), x.h(), x.w()) {
        return Err(Error::ShapeMismatch {
            context: "mul_broadcast_channel",
            expected: format!("(n=1ch,{},{})", x.h(), x.w()),
            got: format!("{:?}", scalar_map.dims()),
        });
    }
    let mut out = x.clone();
    for ni in 0..n {
        for ci in 0..x.c() {
            for i in 0..h {
                for j in 0..w {
                    let v = out.at(ni, ci, i, j) * scalar_map.at(ni, 0, i, j);
                    out.set(ni, ci, i, j, v);
                }
            }
        }
    }
    Ok(out)
}

fn concat_channels(parts: &[Tensor4]) -> Result<Tensor4> {
    let (n, _, h, w) = parts[0].dims();
    let c_total: usize = parts.iter().map(|p| p.c()).sum();
    let mut out = Tensor4::zeros(n, c_total, h, w);
    let mut base = 0;
    for p in parts {
        if (p.n(), p.h(), p.w()) != (n, h, w) {
            return Err(Error::ShapeMismatch {
                context: "concat_channels",
                expected: format!("(n={n},h={h},w={w})"),
                got: format!("{:?}", p.dims()),
            });
        }
        for ni in 0..n {
            for ci in 0..p.c() {
                for i in 0..h {
                    for j in 0..w {
                        out.set(ni, base + ci, i, j, p.at(ni, ci, i, j));
                    }
                }
            }
        }
        base += p.c();
    }
    Ok(out)
}

fn check_shift_extent(cfg: &PssaConfig, h: usize, w: usize) -> Result<()> {
    let m = cfg.max_shift();
    if m >= h || m >= w {
        return Err(Error::ShiftOutOfRange {
            dy: m as i32,
            dx: m as i32,
            h,
            w,
        });
    }
    Ok(())
}

/// Query/key products against each shifted map, concatenated channel-wise in
/// the documented offset order. No value transform is applied here.
///
/// Element-wise mode keeps `c_emb` channels per offset; channel-reduce mode
/// collapses each product to one similarity channel per offset.
pub fn transformed_features(
    x: &Tensor4,
    params: &PssaParams,
    cfg: &PssaConfig,
) -> Result<Tensor4> {
    check_shift_extent(cfg, x.h(), x.w())?;
    let q = embed_1x1(x, &params.attn.wq)?;
    let k = embed_1x1(x, &params.attn.wk)?;
    let mut parts = Vec::new();
    for off in cfg.offsets()? {
        let shifted = shift2d(&k, off)?;
        let prod = hadamard(&q, &shifted)?;
        parts.push(if cfg.channel_reduce {
            sum_channels(&prod)
        } else {
            prod
        });
    }
    concat_channels(&parts)
}

/// Per-offset features with the value transform applied to the shifted
/// operand, mixed but not yet normalized. Linear in the mix weights, which
/// is what the least-squares fitting in the harness relies on.
pub fn pssa_forward_pre_bn(
    x: &Tensor4,
    params: &PssaParams,
    cfg: &PssaConfig,
) -> Result<Tensor4> {
    params.validate(cfg)?;
    check_shift_extent(cfg, x.h(), x.w())?;
    let q = embed_1x1(x, &params.attn.wq)?;
    let k = embed_1x1(x, &params.attn.wk)?;
    let v = embed_1x1(x, &params.attn.wv)?;
    let mut parts = Vec::new();
    if cfg.channel_reduce {
        // similarity scalar per offset times the shifted value vector
        for off in cfg.offsets()? {
            let sim = sum_channels(&hadamard(&q, &shift2d(&k, off)?)?);
            parts.push(mul_broadcast_channel(&sim, &shift2d(&v, off)?)?);
        }
    } else {
        // per-channel product chain q(p) * k(p-d) * v(p-d)
        let kv = hadamard(&k, &v)?;
        for off in cfg.offsets()? {
            parts.push(hadamard(&q, &shift2d(&kv, off)?)?);
        }
    }
    match &params.mix {
        MixOp::Conv(kern) => conv2d(&concat_channels(&parts)?, kern),
        MixOp::Sum => {
            let mut acc = parts[0].clone();
            for p in &parts[1..] {
                acc = add(&acc, p)?;
            }
            Ok(acc)
        }
    }
}

/// One full layer: transformed features, weighted mix, batch normalization.
pub fn pssa_forward(x: &Tensor4, params: &PssaParams, cfg: &PssaConfig) -> Result<Tensor4> {
    batchnorm(&pssa_forward_pre_bn(x, params, cfg)?, &params.bn)
}

/// Sequentially stacked layers; layer `i` output channels must match layer
/// `i+1` input channels. The effective receptive field after `d` layers has
/// Chebyshev radius `d * max_shift`.
pub fn pssa_stack(x: &Tensor4, layers: &[PssaParams], cfg: &PssaConfig) -> Result<Tensor4> {
    if layers.is_empty() {
        return Err(Error::InvalidParam("pssa_stack needs >= 1 layer".into()));
    }
    let mut cur = pssa_forward(x, &layers[0], cfg)?;
    for layer in &layers[1..] {
        if layer.attn.c_in() != cur.c() {
            return Err(Error::ChannelMismatch {
                context: "pssa_stack chaining",
                expected: cur.c(),
                got: layer.attn.c_in(),
            });
        }
        cur = pssa_forward(&cur, layer, cfg)?;
    }
    Ok(cur)
}

/// Fidelity of an approximation against a reference, on flattened buffers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxMetrics {
    /// Cosine similarity; `None` when either vector has zero norm.
    pub cosine: Option<f64>,
    /// `||approx - exact|| / ||exact||`; `None` when the reference has zero
    /// norm.
    pub rel_l2: Option<f64>,
}

/// Compare an approximation to its reference. Degenerate zero-norm inputs
/// yield `None` fields rather than NaN.
pub fn approx_quality(approx: &Tensor4, exact: &Tensor4) -> Result<ApproxMetrics> {
    if !approx.same_dims(exact) {
        return Err(Error::ShapeMismatch {
            context: "approx_quality",
            expected: format!("{:?}", exact.dims()),
            got: format!("{:?}", approx.dims()),
        });
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut ne = 0.0f64;
    let mut diff = 0.0f64;
    for (a, e) in approx.data().iter().zip(exact.data().iter()) {
        let (af, ef) = (*a as f64, *e as f64);
        dot += af * ef;
        na += af * af;
        ne += ef * ef;
        diff += (af - ef) * (af - ef);
    }
    let cosine = if na > 0.0 && ne > 0.0 {
        Some(dot / (na.sqrt() * ne.sqrt()))
    } else {
        None
    };
    let rel_l2 = if ne > 0.0 {
        Some((diff / ne).sqrt())
    } else {
        None
    };
    Ok(ApproxMetrics { cosine, rel_l2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::max_abs_diff;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor4 {
        let data: Vec<f32> = (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor4::from_vec(n, c, h, w, data).unwrap()
    }

    fn identity_params(c: usize, cfg: &PssaConfig) -> PssaParams {
        let n_off = cfg.offsets().unwrap().len();
        // mix that sums all offsets with unit weight, per output channel
        let mut weight = vec![0.0f32; c * n_off * c];
        for o in 0..c {
            for off in 0..n_off {
                weight[o * (n_off * c) + off * c + o] = 1.0;
            }
        }
        PssaParams {
            attn: AttentionParams::identity(c),
            mix: MixOp::Conv(
                ConvKernel::same(c, n_off * c, 1, weight, vec![0.0; c], 1).unwrap(),
            ),
            bn: BatchNormParams::identity(c, 1e-5),
        }
    }

    #[test]
    fn offset_order_contract() {
        let cfg = PssaConfig::default();
        let offs = cfg.offsets().unwrap();
        assert_eq!(offs.len(), 25);
        // direction-major clockwise from north, lengths ascending, identity last
        assert_eq!(offs[0], ShiftOffset::new(-1, 0));
        assert_eq!(offs[1], ShiftOffset::new(-3, 0));
        assert_eq!(offs[2], ShiftOffset::new(-5, 0));
        assert_eq!(offs[3], ShiftOffset::new(-1, 1));
        assert_eq!(offs[23], ShiftOffset::new(-5, -5));
        assert_eq!(offs[24], ShiftOffset::new(0, 0));
    }

    #[test]
    fn config_rejects_duplicate_lengths() {
        let cfg = PssaConfig {
            shift_lengths: vec![1, 3, 3],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn constant_input_identity_embeds_squares() {
        // constant map: every transformed feature is x^2 where the shift
        // source was in bounds, 0 where padding entered
        let cfg = PssaConfig {
            shift_lengths: vec![1],
            ..Default::default()
        };
        let x = Tensor4::filled(1, 1, 4, 4, 1.5);
        let params = identity_params(1, &cfg);
        let feats = transformed_features(&x, &params, &cfg).unwrap();
        let offs = cfg.offsets().unwrap();
        assert_eq!(feats.c(), offs.len());
        for (oi, off) in offs.iter().enumerate() {
            for i in 0..4i64 {
                for j in 0..4i64 {
                    let src_in = i - off.dy as i64 >= 0
                        && i - off.dy as i64 < 4
                        && j - off.dx as i64 >= 0
                        && j - off.dx as i64 < 4;
                    let expect = if src_in { 1.5 * 1.5 } else { 0.0 };
                    assert_eq!(feats.at(0, oi, i as usize, j as usize), expect);
                }
            }
        }
    }

    #[test]
    fn identity_offset_squares_input() {
        let cfg = PssaConfig {
            shift_lengths: vec![],
            directions: vec![],
            include_identity: true,
            stack_depth: 1,
            channel_reduce: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let x = rand_tensor(&mut rng, 1, 2, 3, 3);
        let params = identity_params(2, &cfg);
        let feats = transformed_features(&x, &params, &cfg).unwrap();
        let expect = hadamard(&x, &x).unwrap();
        assert!(max_abs_diff(&feats, &expect) <= 1e-6);
    }

    #[test]
    fn single_offset_matches_shift_hadamard_composition() {
        let cfg = PssaConfig {
            shift_lengths: vec![1],
            directions: vec![(0, 1)],
            include_identity: false,
            stack_depth: 1,
            channel_reduce: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let x = rand_tensor(&mut rng, 1, 1, 8, 8);
        let params = identity_params(1, &cfg);
        let feats = transformed_features(&x, &params, &cfg).unwrap();
        let expect = hadamard(&x, &shift2d(&x, ShiftOffset::new(0, 1)).unwrap()).unwrap();
        assert!(max_abs_diff(&feats, &expect) <= 1e-6);
    }

    #[test]
    fn zero_mix_weights_give_bn_beta() {
        let cfg = PssaConfig {
            shift_lengths: vec![1],
            ..Default::default()
        };
        let n_off = cfg.offsets().unwrap().len();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let x = rand_tensor(&mut rng, 1, 2, 5, 5);
        let params = PssaParams {
            attn: AttentionParams::identity(2),
            mix: MixOp::Conv(ConvKernel::zeros_same(2, n_off * 2, 1, 1).unwrap()),
            bn: BatchNormParams::new(
                vec![1.3, 0.8],
                vec![0.25, -0.75],
                vec![0.0, 0.0],
                vec![1.0, 1.0],
                1e-5,
            )
            .unwrap(),
        };
        let y = pssa_forward(&x, &params, &cfg).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((y.at(0, 0, i, j) - 0.25).abs() < 1e-6);
                assert!((y.at(0, 1, i, j) + 0.75).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_pixel_identity_chain_cubes_input() {
        // 1x1 spatial map, identity everything: q*k*v collapses to x^3
        let cfg = PssaConfig {
            shift_lengths: vec![],
            directions: vec![],
            include_identity: true,
            stack_depth: 1,
            channel_reduce: false,
        };
        let x = Tensor4::from_vec(1, 1, 1, 1, vec![0.7]).unwrap();
        let params = identity_params(1, &cfg);
        let y = pssa_forward(&x, &params, &cfg).unwrap();
        assert!((y.at(0, 0, 0, 0) - 0.7f32 * 0.7 * 0.7).abs() < 1e-6);
    }

    #[test]
    fn forward_matches_composition_oracle() {
        // hand-compose shift -> product -> 1x1 conv -> bn from the already
        // verified primitive ops and compare
        let cfg = PssaConfig {
            shift_lengths: vec![1],
            directions: COMPASS_DIRECTIONS.to_vec(),
            include_identity: true,
            stack_depth: 1,
            channel_reduce: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let x = rand_tensor(&mut rng, 1, 1, 4, 4);
        let n_off = cfg.offsets().unwrap().len();
        let mix_w: Vec<f32> = (0..n_off).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let params = PssaParams {
            attn: AttentionParams::identity(1),
            mix: MixOp::Conv(ConvKernel::same(1, n_off, 1, mix_w.clone(), vec![0.1], 1).unwrap()),
            bn: BatchNormParams::new(vec![1.4], vec![-0.3], vec![0.2], vec![0.9], 1e-5).unwrap(),
        };
        let y = pssa_forward(&x, &params, &cfg).unwrap();

        // oracle composition
        let mut parts = Vec::new();
        for off in cfg.offsets().unwrap() {
            // identity embeds, so q = k = v = x and kv = x * x
            let kv = hadamard(&x, &x).unwrap();
            parts.push(hadamard(&x, &shift2d(&kv, off).unwrap()).unwrap());
        }
        let stacked = concat_channels(&parts).unwrap();
        let mixed = conv2d(
            &stacked,
            &ConvKernel::same(1, n_off, 1, mix_w, vec![0.1], 1).unwrap(),
        )
        .unwrap();
        let expect = batchnorm(&mixed, &params.bn).unwrap();
        assert!(max_abs_diff(&y, &expect) <= 1e-6);
    }

    #[test]
    fn reduce_mode_matches_scalar_oracle() {
        let cfg = PssaConfig {
            shift_lengths: vec![1, 2],
            directions: COMPASS_DIRECTIONS.to_vec(),
            include_identity: true,
            stack_depth: 1,
            channel_reduce: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let x = rand_tensor(&mut rng, 1, 2, 5, 5);
        let offs = cfg.offsets().unwrap();
        let mix_w: Vec<f32> = (0..2 * offs.len() * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let params = PssaParams {
            attn: AttentionParams::new(
                Matrix::from_vec(2, 2, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
                Matrix::from_vec(2, 2, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
                Matrix::from_vec(2, 2, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
            )
            .unwrap(),
            mix: MixOp::Conv(
                ConvKernel::same(2, offs.len() * 2, 1, mix_w.clone(), vec![0.0; 2], 1).unwrap(),
            ),
            bn: BatchNormParams::identity(2, 1e-5),
        };
        let y = pssa_forward(&x, &params, &cfg).unwrap();

        // scalar oracle: per position, per offset similarity times value
        let q = embed_1x1(&x, &params.attn.wq).unwrap();
        let k = embed_1x1(&x, &params.attn.wk).unwrap();
        let v = embed_1x1(&x, &params.attn.wv).unwrap();
        let mut expect = Tensor4::zeros(1, 2, 5, 5);
        for o in 0..2usize {
            for i in 0..5i64 {
                for j in 0..5i64 {
                    let mut acc = 0.0f64;
                    for (oi, off) in offs.iter().enumerate() {
                        let (si, sj) = (i - off.dy as i64, j - off.dx as i64);
                        if si < 0 || si >= 5 || sj < 0 || sj >= 5 {
                            continue;
                        }
                        let mut sim = 0.0f64;
                        for e in 0..2 {
                            sim += q.at(0, e, i as usize, j as usize) as f64
                                * k.at(0, e, si as usize, sj as usize) as f64;
                        }
                        let sim = sim as f32;
                        for e in 0..2usize {
                            let feat = sim * v.at(0, e, si as usize, sj as usize);
                            let wv = mix_w[o * (offs.len() * 2) + oi * 2 + e];
                            acc += wv as f64 * feat as f64;
                        }
                    }
                    expect.set(0, o, i as usize, j as usize, acc as f32);
                }
            }
        }
        assert!(max_abs_diff(&y, &expect) <= 1e-5);
    }

    #[test]
    fn stack_depth_one_equals_forward() {
        let cfg = PssaConfig {
            shift_lengths: vec![1],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let x = rand_tensor(&mut rng, 1, 2, 6, 6);
        let params = identity_params(2, &cfg);
        let a = pssa_stack(&x, std::slice::from_ref(&params), &cfg).unwrap();
        let b = pssa_forward(&x, &params, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stack_depth_two_is_composition() {
        let cfg = PssaConfig {
            shift_lengths: vec![1],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let x = rand_tensor(&mut rng, 1, 2, 6, 6);
        let params = identity_params(2, &cfg);
        let layers = vec![params.clone(), params.clone()];
        let a = pssa_stack(&x, &layers, &cfg).unwrap();
        let b = pssa_forward(&pssa_forward(&x, &params, &cfg).unwrap(), &params, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impulse_support_confined_to_shift_radius() {
        let cfg = PssaConfig::default(); // lengths 1,3,5
        let mut x = Tensor4::filled(1, 1, 16, 16, 1.0);
        let params = identity_params(1, &cfg);
        let base = pssa_stack(&x, &[params.clone(), params.clone()], &cfg).unwrap();
        x.set(0, 0, 8, 8, 2.0);
        let bumped = pssa_stack(&x, &[params.clone(), params], &cfg).unwrap();
        for i in 0..16i64 {
            for j in 0..16i64 {
                let d = (i - 8).abs().max((j - 8).abs());
                if d > 10 {
                    assert_eq!(
                        base.at(0, 0, i as usize, j as usize),
                        bumped.at(0, 0, i as usize, j as usize),
                        "leak outside radius at ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn value_path_linearity() {
        let cfg = PssaConfig {
            shift_lengths: vec![1, 3],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let x = rand_tensor(&mut rng, 1, 2, 6, 6);
        for reduce in [false, true] {
            let cfg = PssaConfig {
                channel_reduce: reduce,
                ..cfg.clone()
            };
            let params = identity_params(2, &cfg);
            let base = pssa_forward_pre_bn(&x, &params, &cfg).unwrap();
            let mut scaled = params.clone();
            // power-of-two scale keeps f32 products exact
            for e in scaled.attn.wv.data_mut() {
                *e *= 2.0;
            }
            let doubled = pssa_forward_pre_bn(&x, &scaled, &cfg).unwrap();
            assert_eq!(crate::tensor::scale(&base, 2.0), doubled);
        }
    }

    #[test]
    fn approx_quality_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let a = rand_tensor(&mut rng, 1, 1, 4, 4);
        let m = approx_quality(&a, &a).unwrap();
        assert!((m.cosine.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.rel_l2.unwrap(), 0.0);
        let neg = crate::tensor::scale(&a, -1.0);
        let m = approx_quality(&neg, &a).unwrap();
        assert!((m.cosine.unwrap() + 1.0).abs() < 1e-12);
        let zeros = Tensor4::zeros(1, 1, 4, 4);
        let m = approx_quality(&a, &zeros).unwrap();
        assert_eq!(m.cosine, None);
        assert_eq!(m.rel_l2, None);
    }

    #[test]
    fn oversized_shift_rejected() {
        let cfg = PssaConfig::default(); // max shift 5
        let x = Tensor4::zeros(1, 1, 4, 4);
        let params = identity_params(1, &cfg);
        assert!(pssa_forward(&x, &params, &cfg).is_err());
    }
}
