//! Dense row-major matrices and the handful of kernels the encoder needs.
//!
//! Storage is `f32`; every reduction (dot products, softmax denominators,
//! means and variances) accumulates in `f64` in a fixed left-to-right order,
//! so repeated runs are bit-identical.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

/// Row-major 2-D matrix of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "Matrix::new",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape {
                    op: "Matrix::from_rows",
                    left: (rows.len(), cols),
                    right: (1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// A single-row matrix.
    pub fn row_vector(values: &[f32]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        // chunks_exact(0) panics; a 0-column matrix still has `rows` empty rows.
        (0..self.rows).map(move |r| self.row(r))
    }

    /// Copy of rows `range`.
    pub fn slice_rows(&self, range: Range<usize>) -> Matrix {
        assert!(range.end <= self.rows, "row range out of bounds");
        Matrix {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }

    /// Copy of columns `range`.
    pub fn slice_cols(&self, range: Range<usize>) -> Matrix {
        assert!(range.end <= self.cols, "column range out of bounds");
        let width = range.len();
        let mut data = Vec::with_capacity(self.rows * width);
        for r in self.iter_rows() {
            data.extend_from_slice(&r[range.clone()]);
        }
        Matrix {
            rows: self.rows,
            cols: width,
            data,
        }
    }

    /// Stacks matrices vertically. Parts with zero rows are allowed.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::Shape {
                    op: "vstack",
                    left: (rows, cols),
                    right: p.shape(),
                });
            }
            rows += p.rows;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Concatenates matrices horizontally (same row count).
    pub fn hstack(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        let mut cols = 0;
        for p in parts {
            if p.rows != rows {
                return Err(Error::Shape {
                    op: "hstack",
                    left: (rows, cols),
                    right: p.shape(),
                });
            }
            cols += p.cols;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn push_row(&mut self, row: &[f32]) -> Result<()> {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        if row.len() != self.cols {
            return Err(Error::Shape {
                op: "push_row",
                left: self.shape(),
                right: (1, row.len()),
            });
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
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

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: f32) -> Matrix {
        self.map(|x| x * s)
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// `self + s * other`, the residual update used throughout the encoder.
    pub fn add_scaled(&self, other: &Matrix, s: f32) -> Result<Matrix> {
        self.zip_with(other, "add_scaled", |a, b| a + s * b)
    }

    fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f32, f32) -> f32,
    ) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f32 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0f32, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Dot product with `f64` accumulation, strictly left to right.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += f64::from(x) * f64::from(y);
    }
    acc
}

/// Standard product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    matmul_transposed(a, &b.transpose())
}

/// `a · bᵀ`, i.e. every output entry is a dot product of a row of `a` with a
/// row of `b`.
pub fn matmul_transposed(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::Shape {
            op: "matmul_transposed",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        let orow = out.row_mut(i);
        for (j, o) in orow.iter_mut().enumerate() {
            *o = dot(ar, b.row(j)) as f32;
        }
    }
    Ok(out)
}

/// Affine map `m · wᵀ + b` with `w` of shape (out × in).
pub fn linear(m: &Matrix, w: &Matrix, bias: Option<&[f32]>) -> Result<Matrix> {
    if m.cols != w.cols {
        return Err(Error::Shape {
            op: "linear",
            left: m.shape(),
            right: w.shape(),
        });
    }
    if let Some(b) = bias {
        if b.len() != w.rows {
            return Err(Error::Shape {
                op: "linear bias",
                left: w.shape(),
                right: (1, b.len()),
            });
        }
    }
    let mut out = Matrix::zeros(m.rows, w.rows);
    for i in 0..m.rows {
        let x = m.row(i);
        let orow = out.row_mut(i);
        for (j, o) in orow.iter_mut().enumerate() {
            let mut acc = dot(x, w.row(j));
            if let Some(b) = bias {
                acc += f64::from(b[j]);
            }
            *o = acc as f32;
        }
    }
    Ok(out)
}

/// Softmax of one row in place. Returns `false` when every entry is `-inf`
/// (the row is left untouched in that case).
pub fn softmax_in_place(row: &mut [f32]) -> bool {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if max == f32::NEG_INFINITY {
        return false;
    }
    let mut denom = 0.0f64;
    for x in row.iter() {
        if *x != f32::NEG_INFINITY {
            denom += libm::exp(f64::from(*x - max));
        }
    }
    for x in row.iter_mut() {
        *x = if *x == f32::NEG_INFINITY {
            0.0
        } else {
            (libm::exp(f64::from(*x - max)) / denom) as f32
        };
    }
    true
}

/// Row-wise softmax; `-inf` entries become exactly 0.
pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for r in 0..out.rows {
        if !softmax_in_place(out.row_mut(r)) {
            return Err(Error::DegenerateRow { row: r });
        }
    }
    Ok(out)
}

/// Log-softmax of a slice, computed in `f64`.
pub fn log_softmax(values: &[f32]) -> Vec<f64> {
    let max = values
        .iter()
        .map(|&x| f64::from(x))
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|&x| libm::exp(f64::from(x) - max)).sum();
    let lse = max + libm::log(sum);
    values.iter().map(|&x| f64::from(x) - lse).collect()
}

/// Per-row normalization with population variance, then `gain * x + bias`.
pub fn layer_norm(m: &Matrix, gain: &[f32], bias: &[f32], eps: f32) -> Result<Matrix> {
    if gain.len() != m.cols || bias.len() != m.cols {
        return Err(Error::Shape {
            op: "layer_norm",
            left: m.shape(),
            right: (gain.len(), bias.len()),
        });
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Config(alloc::format!(
            "layer_norm eps must be > 0, got {eps}"
        )));
    }
    let n = m.cols as f64;
    let mut out = Matrix::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        let row = m.row(r);
        let mut mean = 0.0f64;
        for &x in row {
            mean += f64::from(x);
        }
        mean /= n;
        let mut var = 0.0f64;
        for &x in row {
            let d = f64::from(x) - mean;
            var += d * d;
        }
        var /= n;
        let inv = 1.0 / libm::sqrt(var + f64::from(eps));
        for (c, o) in out.row_mut(r).iter_mut().enumerate() {
            let z = (f64::from(row[c]) - mean) * inv;
            *o = (z * f64::from(gain[c]) + f64::from(bias[c])) as f32;
        }
    }
    Ok(out)
}

/// Depthwise 1-D convolution over time with "same" zero padding.
///
/// `kernels` holds one row of taps per channel (channels × width). The width
/// must be odd so the window is centred.
pub fn depthwise_conv1d(m: &Matrix, kernels: &Matrix) -> Result<Matrix> {
    let width = kernels.cols;
    if width.is_multiple_of(2) {
        return Err(Error::Config(alloc::format!(
            "depthwise kernel width must be odd, got {width}"
        )));
    }
    depthwise_conv1d_padded(m, kernels, width / 2)
}

/// Depthwise convolution with an explicit left padding; the right padding is
/// `width - 1 - left_pad`, so the output always has as many rows as the input.
///
/// `out[t][c] = sum_k kernels[c][k] * m[t + k - left_pad][c]`, reading zeros
/// outside the input.
pub fn depthwise_conv1d_padded(m: &Matrix, kernels: &Matrix, left_pad: usize) -> Result<Matrix> {
    if kernels.rows != m.cols {
        return Err(Error::Shape {
            op: "depthwise_conv1d",
            left: m.shape(),
            right: kernels.shape(),
        });
    }
    let width = kernels.cols;
    if width == 0 || left_pad >= width {
        return Err(Error::Config(alloc::format!(
            "invalid depthwise kernel width {width} with left padding {left_pad}"
        )));
    }
    let t_len = m.rows as isize;
    let mut out = Matrix::zeros(m.rows, m.cols);
    for t in 0..m.rows {
        for c in 0..m.cols {
            let taps = kernels.row(c);
            let mut acc = 0.0f64;
            for (k, &w) in taps.iter().enumerate() {
                let src = t as isize + k as isize - left_pad as isize;
                if src >= 0 && src < t_len {
                    acc += f64::from(w) * f64::from(m.get(src as usize, c));
                }
            }
            out.set(t, c, acc as f32);
        }
    }
    Ok(out)
}

/// Column means.
pub fn mean_pool_rows(m: &Matrix) -> Result<Vec<f32>> {
    if m.rows == 0 {
        return Err(Error::EmptyInput("mean_pool_rows"));
    }
    let n = m.rows as f64;
    Ok((0..m.cols)
        .map(|c| {
            let mut acc = 0.0f64;
            for r in 0..m.rows {
                acc += f64::from(m.get(r, c));
            }
            (acc / n) as f32
        })
        .collect())
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    (1.0 / (1.0 + libm::exp(-f64::from(x)))) as f32
}

/// Gated linear unit: first half of the columns times sigmoid of the second.
pub fn glu(m: &Matrix) -> Result<Matrix> {
    if !m.cols.is_multiple_of(2) {
        return Err(Error::Shape {
            op: "glu",
            left: m.shape(),
            right: (0, 2),
        });
    }
    let half = m.cols / 2;
    let mut out = Matrix::zeros(m.rows, half);
    for r in 0..m.rows {
        let src = m.row(r);
        for (c, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = src[c] * sigmoid(src[half + c]);
        }
    }
    Ok(out)
}

/// `x * sigmoid(x)` elementwise.
pub fn swish(m: &Matrix) -> Matrix {
    m.map(|x| x * sigmoid(x))
}

pub fn relu(m: &Matrix) -> Matrix {
    m.map(|x| x.max(0.0))
}
