//! Dense rank-4 feature maps and the primitive element-wise / shift
//! operations everything else is built from.
//!
//! Layout is row-major `(n, c, h, w)`: batch, channel, row, column. Values
//! are stored as `f32`; reductions elsewhere in the library accumulate in
//! `f64`. Tensors are immutable from the caller's perspective — every
//! operation returns a fresh tensor.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f32>,
}

/// A spatial displacement in pixels. `dy` grows downward, `dx` to the right.
///
/// `shift2d(x, off)` moves content by `off`: the output at `(i, j)` reads the
/// source at `(i - dy, j - dx)`, so a positive offset shifts the map
/// down/right and zero-fills the vacated border.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShiftOffset {
    pub dy: i32,
    pub dx: i32,
}

impl ShiftOffset {
    pub const fn new(dy: i32, dx: i32) -> Self {
        ShiftOffset { dy, dx }
    }

    pub fn negate(self) -> Self {
        ShiftOffset {
            dy: -self.dy,
            dx: -self.dx,
        }
    }

    /// Chebyshev (L-infinity) magnitude.
    pub fn chebyshev(self) -> u32 {
        self.dy.unsigned_abs().max(self.dx.unsigned_abs())
    }
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        assert!(n >= 1 && c >= 1 && h >= 1 && w >= 1, "all dims must be >= 1");
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn filled(n: usize, c: usize, h: usize, w: usize, value: f32) -> Self {
        let mut t = Tensor4::zeros(n, c, h, w);
        t.data.fill(value);
        t
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidParam("tensor dims must all be >= 1".into()));
        }
        if data.len() != n * c * h * w {
            return Err(Error::ShapeMismatch {
                context: "Tensor4::from_vec",
                expected: format!("{} values", n * c * h * w),
                got: format!("{}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("non-finite tensor value".into()));
        }
        Ok(Tensor4 { n, c, h, w, data })
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, i: usize, j: usize) -> usize {
        ((n * self.c + c) * self.h + i) * self.w + j
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, i: usize, j: usize) -> f32 {
        self.data[self.idx(n, c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, i: usize, j: usize, v: f32) {
        let k = self.idx(n, c, i, j);
        self.data[k] = v;
    }

    /// Read with zero padding outside the spatial extent.
    #[inline]
    pub fn at_padded(&self, n: usize, c: usize, i: i64, j: i64) -> f32 {
        if i < 0 || j < 0 || i >= self.h as i64 || j >= self.w as i64 {
            0.0
        } else {
            self.at(n, c, i as usize, j as usize)
        }
    }

    pub fn same_dims(&self, other: &Tensor4) -> bool {
        self.dims() == other.dims()
    }

    fn require_same_dims(&self, other: &Tensor4, context: &'static str) -> Result<()> {
        if !self.same_dims(other) {
            return Err(Error::ShapeMismatch {
                context,
                expected: format!("{:?}", self.dims()),
                got: format!("{:?}", other.dims()),
            });
        }
        Ok(())
    }
}

/// Translate every channel plane by `off`, zero-filling where the source
/// index falls outside the map. Errors when the offset magnitude reaches the
/// spatial extent (the result would be all padding).
pub fn shift2d(x: &Tensor4, off: ShiftOffset) -> Result<Tensor4> {
    let (n, c, h, w) = x.dims();
    if off.dy.unsigned_abs() as usize >= h || off.dx.unsigned_abs() as usize >= w {
        return Err(Error::ShiftOutOfRange {
            dy: off.dy,
            dx: off.dx,
            h,
            w,
        });
    }
    let mut out = Tensor4::zeros(n, c, h, w);
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..h {
                let src_i = i as i64 - off.dy as i64;
                if src_i < 0 || src_i >= h as i64 {
                    continue;
                }
                for j in 0..w {
                    let src_j = j as i64 - off.dx as i64;
                    if src_j < 0 || src_j >= w as i64 {
                        continue;
                    }
                    let v = x.at(ni, ci, src_i as usize, src_j as usize);
                    out.set(ni, ci, i, j, v);
                }
            }
        }
    }
    Ok(out)
}

/// Element-wise product.
pub fn hadamard(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    a.require_same_dims(b, "hadamard")?;
    let mut out = a.clone();
    for (o, bv) in out.data.iter_mut().zip(b.data.iter()) {
        *o *= *bv;
    }
    Ok(out)
}

/// Element-wise sum.
pub fn add(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    a.require_same_dims(b, "add")?;
    let mut out = a.clone();
    for (o, bv) in out.data.iter_mut().zip(b.data.iter()) {
        *o += *bv;
    }
    Ok(out)
}

pub fn scale(a: &Tensor4, s: f32) -> Tensor4 {
    let mut out = a.clone();
    for o in out.data.iter_mut() {
        *o *= s;
    }
    out
}

/// Reshape one batch item to a `(c, h*w)` matrix. Column `k` holds the
/// feature vector of spatial position `(k / w, k % w)`.
pub fn to_matrix(x: &Tensor4, n_index: usize) -> Result<Matrix> {
    let (n, c, h, w) = x.dims();
    if n_index >= n {
        return Err(Error::IndexOutOfRange {
            index: n_index,
            len: n,
        });
    }
    let l = h * w;
    let mut m = Matrix::zeros(c, l);
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                m.set(ci, i * w + j, x.at(n_index, ci, i, j));
            }
        }
    }
    Ok(m)
}

/// Inverse of [`to_matrix`] for a single batch item.
pub fn from_matrix(m: &Matrix, h: usize, w: usize) -> Result<Tensor4> {
    if m.cols() != h * w {
        return Err(Error::ShapeMismatch {
            context: "from_matrix",
            expected: format!("{} columns", h * w),
            got: format!("{}", m.cols()),
        });
    }
    let c = m.rows();
    let mut t = Tensor4::zeros(1, c, h, w);
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                t.set(0, ci, i, j, m.at(ci, i * w + j));
            }
        }
    }
    Ok(t)
}

/// Largest absolute element-wise difference.
pub fn max_abs_diff(a: &Tensor4, b: &Tensor4) -> f64 {
    assert!(a.same_dims(b), "max_abs_diff: dims differ");
    a.data
        .iter()
        .zip(b.data.iter())
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .fold(0.0, f64::max)
}

/// `||a - b|| / ||b||`, or `None` when `b` has zero norm.
pub fn rel_l2(a: &Tensor4, b: &Tensor4) -> Option<f64> {
    assert!(a.same_dims(b), "rel_l2: dims differ");
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (x, y) in a.data.iter().zip(b.data.iter()) {
        let d = *x as f64 - *y as f64;
        num += d * d;
        den += (*y as f64) * (*y as f64);
    }
    if den == 0.0 {
        None
    } else {
        Some((num / den).sqrt())
    }
}
