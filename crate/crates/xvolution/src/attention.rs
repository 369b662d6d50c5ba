//! Exact global self-attention over the flattened spatial axis.
//!
//! The input is reshaped to a `(c, L)` matrix with `L = h*w`; queries, keys
//! and values are 1x1 (spatially shared) linear embeddings. Cost is O(L^2)
//! by construction — this is the oracle the linear-time approximation is
//! measured against.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor::{from_matrix, to_matrix, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    /// Optional multiplier on the raw scores. The default (`None`) applies
    /// the scores as-is, with no 1/sqrt(d) temperature.
    pub scale: Option<f32>,
}

impl AttentionParams {
    pub fn new(wq: Matrix, wk: Matrix, wv: Matrix) -> Result<Self> {
        let c_in = wq.cols();
        let c_emb = wq.rows();
        if c_emb < 1 {
            return Err(Error::InvalidParam("embedding dim must be >= 1".into()));
        }
        for (name, m) in [("wk", &wk), ("wv", &wv)] {
            if m.cols() != c_in || m.rows() != c_emb {
                return Err(Error::ShapeMismatch {
                    context: "AttentionParams::new",
                    expected: format!("{c_emb}x{c_in}"),
                    got: format!("{name} is {}x{}", m.rows(), m.cols()),
                });
            }
        }
        Ok(AttentionParams {
            wq,
            wk,
            wv,
            scale: None,
        })
    }

    pub fn identity(c: usize) -> Self {
        AttentionParams {
            wq: Matrix::identity(c),
            wk: Matrix::identity(c),
            wv: Matrix::identity(c),
            scale: None,
        }
    }

    pub fn c_in(&self) -> usize {
        self.wq.cols()
    }

    pub fn c_emb(&self) -> usize {
        self.wq.rows()
    }
}

/// Row-wise softmax with max subtraction; each row sums to 1.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        let row = m.row(r);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut sum = 0.0f64;
        let mut exps = vec![0.0f64; m.cols()];
        for (k, v) in row.iter().enumerate() {
            let e = ((*v as f64) - max).exp();
            exps[k] = e;
            sum += e;
        }
        for (k, e) in exps.iter().enumerate() {
            out.set(r, k, (e / sum) as f32);
        }
    }
    out
}

fn score_matrix(x: &Tensor4, p: &AttentionParams, n_index: usize) -> Result<(Matrix, Matrix)> {
    let xm = to_matrix(x, n_index)?;
    let q = p.wq.matmul(&xm)?; // (c_emb, L)
    let k = p.wk.matmul(&xm)?;
    let v = p.wv.matmul(&xm)?;
    let mut scores = q.transpose().matmul(&k)?; // (L, L), row = query position
    if let Some(s) = p.scale {
        for e in scores.data_mut() {
            *e *= s;
        }
    }
    Ok((scores, v))
}

fn attention_with(
    x: &Tensor4,
    p: &AttentionParams,
    normalize: bool,
) -> Result<Tensor4> {
    let (n, c, h, w) = x.dims();
    if c != p.c_in() {
        return Err(Error::ChannelMismatch {
            context: "self_attention",
            expected: p.c_in(),
            got: c,
        });
    }
    let mut out = Tensor4::zeros(n, p.c_emb(), h, w);
    for ni in 0..n {
        let (scores, v) = score_matrix(x, p, ni)?;
        let weights = if normalize {
            softmax_rows(&scores)
        } else {
            scores
        };
        // y_l = sum_m weights[l, m] * v[:, m]
        let yt = weights.matmul(&v.transpose())?; // (L, c_emb)
        let item = from_matrix(&yt.transpose(), h, w)?;
        out.data_mut()[ni * p.c_emb() * h * w..(ni + 1) * p.c_emb() * h * w]
            .copy_from_slice(item.data());
    }
    Ok(out)
}

/// Softmax-normalized global self-attention (one row of weights per query
/// position, normalized over all h*w key positions).
pub fn self_attention_exact(x: &Tensor4, p: &AttentionParams) -> Result<Tensor4> {
    attention_with(x, p, true)
}

/// Same contraction without the softmax: raw score-weighted values. The
/// shift-based approximation carries unnormalized logits, so this is the
/// matching comparison target.
pub fn self_attention_logits(x: &Tensor4, p: &AttentionParams) -> Result<Tensor4> {
    attention_with(x, p, false)
}
