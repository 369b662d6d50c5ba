//! Spatially varying (dynamic) convolution: a static kernel plus a
//! content-dependent scalar coefficient per output position and neighbor
//! offset.

use crate::conv::ConvKernel;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor::{ShiftOffset, Tensor4};

/// Per-position, per-offset scalar coefficients. Offsets use the shift
/// convention: offset `(dy, dx)` at output position `(i, j)` refers to the
/// neighbor at `(i - dy, j - dx)`; out-of-bounds neighbors contribute zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicKernelField {
    offsets: Vec<ShiftOffset>,
    coeff: Vec<f32>, // (n, h, w, |offsets|) row-major
    n: usize,
    h: usize,
    w: usize,
}

impl DynamicKernelField {
    pub fn new(
        n: usize,
        h: usize,
        w: usize,
        offsets: Vec<ShiftOffset>,
        coeff: Vec<f32>,
    ) -> Result<Self> {
        if coeff.len() != n * h * w * offsets.len() {
            return Err(Error::ShapeMismatch {
                context: "DynamicKernelField::new",
                expected: format!("{} coefficients", n * h * w * offsets.len()),
                got: format!("{}", coeff.len()),
            });
        }
        for (i, a) in offsets.iter().enumerate() {
            for b in offsets.iter().skip(i + 1) {
                if a == b {
                    return Err(Error::InvalidParam(format!(
                        "duplicate offset ({},{})",
                        a.dy, a.dx
                    )));
                }
            }
        }
        Ok(DynamicKernelField {
            offsets,
            coeff,
            n,
            h,
            w,
        })
    }

    pub fn offsets(&self) -> &[ShiftOffset] {
        &self.offsets
    }

    pub fn spatial_dims(&self) -> (usize, usize, usize) {
        (self.n, self.h, self.w)
    }

    pub fn coeff(&self) -> &[f32] {
        &self.coeff
    }

    #[inline]
    pub fn coeff_at(&self, n: usize, i: usize, j: usize, offset_index: usize) -> f32 {
        self.coeff[((n * self.h + i) * self.w + j) * self.offsets.len() + offset_index]
    }

    #[inline]
    pub fn coeff_set(&mut self, n: usize, i: usize, j: usize, offset_index: usize, v: f32) {
        let k = ((n * self.h + i) * self.w + j) * self.offsets.len() + offset_index;
        self.coeff[k] = v;
    }
}

/// `out(p) = sum_over_offsets (coeff(p, d) * value + static_weight(d)) x(p - d)
///  + static_bias + bias`.
///
/// The window is the union of the field's offsets and the static kernel's
/// taps: the static weight is zero at offsets outside its grid and the
/// dynamic coefficient is zero at taps outside the field. The static kernel
/// must be stride-1 "same" so both supports are centered on the output
/// position.
pub fn dynamic_conv2d(
    x: &Tensor4,
    field: &DynamicKernelField,
    static_kern: &ConvKernel,
    value: &Matrix,
    bias: &[f32],
) -> Result<Tensor4> {
    let (n, c, h, w) = x.dims();
    if field.spatial_dims() != (n, h, w) {
        return Err(Error::ShapeMismatch {
            context: "dynamic_conv2d field",
            expected: format!("({n},{h},{w})"),
            got: format!("{:?}", field.spatial_dims()),
        });
    }
    if static_kern.c_in() != c {
        return Err(Error::ChannelMismatch {
            context: "dynamic_conv2d static kernel",
            expected: c,
            got: static_kern.c_in(),
        });
    }
    if !static_kern.is_same_mode() {
        return Err(Error::InvalidParam(
            "dynamic_conv2d requires a stride-1 same-padded static kernel".into(),
        ));
    }
    let c_out = static_kern.c_out();
    if value.cols() != c || value.rows() != c_out {
        return Err(Error::ShapeMismatch {
            context: "dynamic_conv2d value",
            expected: format!("{c_out}x{c}"),
            got: format!("{}x{}", value.rows(), value.cols()),
        });
    }
    if bias.len() != c_out {
        return Err(Error::ShapeMismatch {
            context: "dynamic_conv2d bias",
            expected: format!("{c_out}"),
            got: format!("{}", bias.len()),
        });
    }
    let k = static_kern.k() as i64;
    let r = (k - 1) / 2;
    let dil = static_kern.dilation() as i64;
    let mut out = Tensor4::zeros(n, c_out, h, w);
    let mut acc = vec![0.0f64; c_out];
    for ni in 0..n {
        for i in 0..h as i64 {
            for j in 0..w as i64 {
                for (o, a) in acc.iter_mut().enumerate() {
                    *a = static_kern.bias()[o] as f64 + bias[o] as f64;
                }
                // static taps, Eq-style centered window
                for ci in 0..c {
                    for ki in 0..k {
                        let src_i = i + (ki - r) * dil;
                        if src_i < 0 || src_i >= h as i64 {
                            continue;
                        }
                        for kj in 0..k {
                            let src_j = j + (kj - r) * dil;
                            if src_j < 0 || src_j >= w as i64 {
                                continue;
                            }
                            let xv = x.at(ni, ci, src_i as usize, src_j as usize) as f64;
                            for (o, a) in acc.iter_mut().enumerate() {
                                *a += static_kern.w_at(o, ci, ki as usize, kj as usize) as f64 * xv;
                            }
                        }
                    }
                }
                // dynamic taps at the field's offsets
                for (oi, off) in field.offsets().iter().enumerate() {
                    let src_i = i - off.dy as i64;
                    let src_j = j - off.dx as i64;
                    if src_i < 0 || src_i >= h as i64 || src_j < 0 || src_j >= w as i64 {
                        continue;
                    }
                    let coeff = field.coeff_at(ni, i as usize, j as usize, oi) as f64;
                    if coeff == 0.0 {
                        continue;
                    }
                    for (o, a) in acc.iter_mut().enumerate() {
                        let mut vx = 0.0f64;
                        for ci in 0..c {
                            vx += value.at(o, ci) as f64
                                * x.at(ni, ci, src_i as usize, src_j as usize) as f64;
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
