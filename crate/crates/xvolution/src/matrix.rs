//! Minimal dense matrix used for the attention math and least-squares fits.
//!
//! Storage is row-major `f32`; every reduction accumulates in `f64` so the
//! downstream equivalence tolerances stay tight.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                context: "Matrix::from_vec",
                expected: format!("{} values", rows * cols),
                got: format!("{}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("non-finite matrix entry".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Identity, useful for embedding-free attention configurations.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self * other` with f64 accumulation.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                context: "Matrix::matmul",
                expected: format!("lhs cols == rhs rows ({})", self.cols),
                got: format!("{}", other.rows),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for c in 0..other.cols {
                let mut acc = 0.0f64;
                for k in 0..self.cols {
                    acc += self.data[r * self.cols + k] as f64
                        * other.data[k * other.cols + c] as f64;
                }
                out.data[r * other.cols + c] = acc as f32;
            }
        }
        Ok(out)
    }

    /// `self * v` for a matrix-vector product, f64 accumulation.
    pub fn matvec(&self, v: &[f32]) -> Result<Vec<f32>> {
        if v.len() != self.cols {
            return Err(Error::ShapeMismatch {
                context: "Matrix::matvec",
                expected: format!("{}", self.cols),
                got: format!("{}", v.len()),
            });
        }
        let mut out = vec![0.0f32; self.rows];
        for r in 0..self.rows {
            let mut acc = 0.0f64;
            for k in 0..self.cols {
                acc += self.data[r * self.cols + k] as f64 * v[k] as f64;
            }
            out[r] = acc as f32;
        }
        Ok(out)
    }
}

/// Solve `a * x = b` for square `a` via Gaussian elimination with partial
/// pivoting, all in f64. `a` is `n x n` row-major, `b` has `n * m` entries
/// (m right-hand sides, row-major). Used by the mix-weight least-squares fit.
pub fn solve_f64(a: &mut [f64], b: &mut [f64], n: usize, m: usize) -> Result<()> {
    if a.len() != n * n || b.len() != n * m {
        return Err(Error::InvalidParam("solve_f64: bad system dims".into()));
    }
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best == 0.0 {
            return Err(Error::InvalidParam("solve_f64: singular system".into()));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            for k in 0..m {
                b.swap(col * m + k, pivot * m + k);
            }
        }
        let diag = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= factor * a[col * n + k];
            }
            for k in 0..m {
                b[r * m + k] -= factor * b[col * m + k];
            }
        }
    }
    for col in (0..n).rev() {
        let diag = a[col * n + col];
        for k in 0..m {
            let mut acc = b[col * m + k];
            for j in col + 1..n {
                acc -= a[col * n + j] * b[j * m + k];
            }
            b[col * m + k] = acc / diag;
        }
    }
    Ok(())
}
