//! Static 2-D convolution over `(n, c, h, w)` tensors.
//!
//! The kernel window is odd-sized and centered; sources outside the map are
//! zero. With `stride == 1` and "same" padding the output keeps the input's
//! spatial dims.

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    weight: Vec<f32>, // (c_out, c_in, k, k) row-major
    bias: Vec<f32>,   // (c_out)
    c_out: usize,
    c_in: usize,
    k: usize,
    stride: usize,
    dilation: usize,
    padding: usize,
}

impl ConvKernel {
    pub fn new(
        c_out: usize,
        c_in: usize,
        k: usize,
        weight: Vec<f32>,
        bias: Vec<f32>,
        stride: usize,
        dilation: usize,
        padding: usize,
    ) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::EvenKernelSize(k));
        }
        if stride < 1 || dilation < 1 {
            return Err(Error::InvalidParam(
                "stride and dilation must be >= 1".into(),
            ));
        }
        if weight.len() != c_out * c_in * k * k {
            return Err(Error::ShapeMismatch {
                context: "ConvKernel::new weight",
                expected: format!("{} values", c_out * c_in * k * k),
                got: format!("{}", weight.len()),
            });
        }
        if bias.len() != c_out {
            return Err(Error::ShapeMismatch {
                context: "ConvKernel::new bias",
                expected: format!("{c_out} values"),
                got: format!("{}", bias.len()),
            });
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("non-finite kernel value".into()));
        }
        Ok(ConvKernel {
            weight,
            bias,
            c_out,
            c_in,
            k,
            stride,
            dilation,
            padding,
        })
    }

    /// Stride-1 kernel padded so output spatial dims equal input dims.
    pub fn same(
        c_out: usize,
        c_in: usize,
        k: usize,
        weight: Vec<f32>,
        bias: Vec<f32>,
        dilation: usize,
    ) -> Result<Self> {
        let padding = dilation * (k - 1) / 2;
        ConvKernel::new(c_out, c_in, k, weight, bias, 1, dilation, padding)
    }

    pub fn zeros_same(c_out: usize, c_in: usize, k: usize, dilation: usize) -> Result<Self> {
        ConvKernel::same(
            c_out,
            c_in,
            k,
            vec![0.0; c_out * c_in * k * k],
            vec![0.0; c_out],
            dilation,
        )
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    /// True when stride is 1 and the padding preserves spatial dims.
    pub fn is_same_mode(&self) -> bool {
        self.stride == 1 && self.padding == self.dilation * (self.k - 1) / 2
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut [f32] {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [f32] {
        &mut self.bias
    }

    #[inline]
    pub fn w_at(&self, o: usize, ci: usize, ki: usize, kj: usize) -> f32 {
        self.weight[((o * self.c_in + ci) * self.k + ki) * self.k + kj]
    }

    #[inline]
    pub fn w_set(&mut self, o: usize, ci: usize, ki: usize, kj: usize, v: f32) {
        let idx = ((o * self.c_in + ci) * self.k + ki) * self.k + kj;
        self.weight[idx] = v;
    }

    /// Output spatial dims for an input of `(h, w)`.
    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let span = self.dilation * (self.k - 1) + 1;
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < span || pw < span {
            return Err(Error::InvalidParam(format!(
                "padded input {ph}x{pw} smaller than kernel extent {span}"
            )));
        }
        Ok(((ph - span) / self.stride + 1, (pw - span) / self.stride + 1))
    }
}

/// Direct convolution: for every output element, the kernel window is swept
/// over the zero-padded input and accumulated in f64.
pub fn conv2d(x: &Tensor4, kern: &ConvKernel) -> Result<Tensor4> {
    let (n, c, h, w) = x.dims();
    if c != kern.c_in {
        return Err(Error::ChannelMismatch {
            context: "conv2d",
            expected: kern.c_in,
            got: c,
        });
    }
    let (ho, wo) = kern.out_dims(h, w)?;
    let mut out = Tensor4::zeros(n, kern.c_out, ho, wo);
    let kk = kern.k;
    let dil = kern.dilation as i64;
    let pad = kern.padding as i64;
    let stride = kern.stride as i64;
    for ni in 0..n {
        for o in 0..kern.c_out {
            for oi in 0..ho {
                for oj in 0..wo {
                    let mut acc = kern.bias[o] as f64;
                    for ci in 0..c {
                        for ki in 0..kk {
                            let src_i = oi as i64 * stride + ki as i64 * dil - pad;
                            if src_i < 0 || src_i >= h as i64 {
                                continue;
                            }
                            for kj in 0..kk {
                                let src_j = oj as i64 * stride + kj as i64 * dil - pad;
                                if src_j < 0 || src_j >= w as i64 {
                                    continue;
                                }
                                acc += kern.w_at(o, ci, ki, kj) as f64
                                    * x.at(ni, ci, src_i as usize, src_j as usize) as f64;
                            }
                        }
                    }
                    out.set(ni, o, oi, oj, acc as f32);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Literal transcription of the centered-window definition: six nested
    /// loops, zero padding, independent of the library path above.
    fn conv_oracle(x: &Tensor4, kern: &ConvKernel) -> Tensor4 {
        assert_eq!(kern.stride(), 1);
        assert!(kern.is_same_mode());
        let (n, c, h, w) = x.dims();
        let r = (kern.k() as i64 - 1) / 2;
        let dil = kern.dilation() as i64;
        let mut out = Tensor4::zeros(n, kern.c_out(), h, w);
        for ni in 0..n {
            for o in 0..kern.c_out() {
                for i in 0..h as i64 {
                    for j in 0..w as i64 {
                        let mut acc = kern.bias()[o] as f64;
                        for ci in 0..c {
                            for di in -r..=r {
                                for dj in -r..=r {
                                    let wv = kern.w_at(o, ci, (di + r) as usize, (dj + r) as usize);
                                    acc += wv as f64
                                        * x.at_padded(ni, ci, i + di * dil, j + dj * dil) as f64;
                                }
                            }
                        }
                        out.set(ni, o, i as usize, j as usize, acc as f32);
                    }
                }
            }
        }
        out
    }

    fn rand_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor4 {
        let data: Vec<f32> = (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor4::from_vec(n, c, h, w, data).unwrap()
    }

    fn rand_kernel(
        rng: &mut ChaCha8Rng,
        c_out: usize,
        c_in: usize,
        k: usize,
        dilation: usize,
    ) -> ConvKernel {
        let weight: Vec<f32> = (0..c_out * c_in * k * k)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let bias: Vec<f32> = (0..c_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ConvKernel::same(c_out, c_in, k, weight, bias, dilation).unwrap()
    }

    #[test]
    fn identity_1x1_kernel() {
        let x = Tensor4::from_vec(1, 1, 2, 2, vec![1.0, -2.0, 3.5, 0.25]).unwrap();
        let kern = ConvKernel::same(1, 1, 1, vec![1.0], vec![0.0], 1).unwrap();
        assert_eq!(conv2d(&x, &kern).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let x = Tensor4::zeros(2, 3, 4, 4);
        let kern = ConvKernel::same(
            2,
            3,
            3,
            vec![0.7; 2 * 3 * 9],
            vec![1.25, -0.5],
            1,
        )
        .unwrap();
        let y = conv2d(&x, &kern).unwrap();
        for n in 0..2 {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(y.at(n, 0, i, j), 1.25);
                    assert_eq!(y.at(n, 1, i, j), -0.5);
                }
            }
        }
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = rand_tensor(&mut rng, 1, 2, 5, 5);
        let kern = rand_kernel(&mut rng, 3, 2, 3, 1);
        let y = conv2d(&x, &kern).unwrap();
        let expect = conv_oracle(&x, &kern);
        assert!(crate::tensor::max_abs_diff(&y, &expect) <= 1e-6);
    }

    #[test]
    fn dilated_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = rand_tensor(&mut rng, 2, 2, 8, 9);
        let kern = rand_kernel(&mut rng, 2, 2, 5, 2);
        let y = conv2d(&x, &kern).unwrap();
        let expect = conv_oracle(&x, &kern);
        assert!(crate::tensor::max_abs_diff(&y, &expect) <= 1e-6);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let x = Tensor4::zeros(1, 2, 4, 4);
        let kern = ConvKernel::zeros_same(1, 3, 3, 1).unwrap();
        assert!(conv2d(&x, &kern).is_err());
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(ConvKernel::same(1, 1, 4, vec![0.0; 16], vec![0.0], 1).is_err());
    }

    #[test]
    fn strided_output_dims() {
        let kern = ConvKernel::new(1, 1, 3, vec![0.0; 9], vec![0.0], 2, 1, 1).unwrap();
        assert_eq!(kern.out_dims(8, 8).unwrap(), (4, 4));
    }

    #[test]
    fn linearity_with_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_tensor(&mut rng, 1, 2, 6, 6);
        let y = rand_tensor(&mut rng, 1, 2, 6, 6);
        let mut kern = rand_kernel(&mut rng, 2, 2, 3, 1);
        kern.bias_mut().fill(0.0);
        let (a, b) = (0.6f32, -1.3f32);
        let lhs = conv2d(
            &crate::tensor::add(&crate::tensor::scale(&x, a), &crate::tensor::scale(&y, b))
                .unwrap(),
            &kern,
        )
        .unwrap();
        let rhs = crate::tensor::add(
            &crate::tensor::scale(&conv2d(&x, &kern).unwrap(), a),
            &crate::tensor::scale(&conv2d(&y, &kern).unwrap(), b),
        )
        .unwrap();
        assert!(crate::tensor::max_abs_diff(&lhs, &rhs) <= 1e-5);
    }
}
