//! Dense row-major matrices and the reference attention path.
//!
//! [`dense_attention`] materializes the full score grid and is the oracle the
//! sparse kernels are checked against.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Additive-mask sentinel for a blocked position (the most negative finite `f64`).
///
/// Positions carrying this value are excluded from the row maximum and map to
/// exactly zero weight.
pub const MASKED: f64 = f64::MIN;

/// Row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data. Rejects wrong lengths and NaN/Inf.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape(format!("ragged rows, expected width {cols}")));
        }
        Self::from_vec(rows.len(), cols, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Square identity.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Additive mask of the given shape with [`MASKED`] wherever `allowed` is false.
    pub fn additive_mask(rows: usize, cols: usize, allowed: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if !allowed(i, j) {
                    m.data[i * cols + j] = MASKED;
                }
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major backing slice.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Consumes the matrix, returning its row-major data.
    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Sets one entry. Non-finite values are rejected.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(i * self.cols + j));
        }
        self.data[i * self.cols + j] = value;
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!("vstack of width {} onto width {}", other.cols, self.cols)));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { rows: self.rows + other.rows, cols: self.cols, data })
    }

    /// Largest absolute entry-wise difference. Shapes must match.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())))
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(rows, cols, data)
    }
}

/// Standard matrix product with `f64` accumulation.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = vec![0.0; a.rows * b.cols];
    for i in 0..a.rows {
        let out_row = &mut out[i * b.cols..(i + 1) * b.cols];
        for (p, &x) in a.row(i).iter().enumerate() {
            for (o, &y) in out_row.iter_mut().zip(b.row(p)) {
                *o += x * y;
            }
        }
    }
    Matrix::from_raw(a.rows, b.cols, out)
}

#[inline]
pub(crate) fn is_masked(bias: f64) -> bool {
    bias <= MASKED
}

/// Softmax of one logit row into `out`, given per-position additive biases.
///
/// Masked positions get exactly zero. Returns `false` if every position is masked.
pub(crate) fn softmax_into(logits: &[f64], bias: &[f64], out: &mut [f64]) -> bool {
    let mut max = f64::NEG_INFINITY;
    for (&x, &b) in logits.iter().zip(bias) {
        if !is_masked(b) {
            max = max.max(x + b);
        }
    }
    if max == f64::NEG_INFINITY {
        return false;
    }
    let mut sum = 0.0;
    for ((o, &x), &b) in out.iter_mut().zip(logits).zip(bias) {
        *o = if is_masked(b) { 0.0 } else { libm::exp(x + b - max) };
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    true
}

/// Row-wise softmax of `m + additive_mask`, stabilized by the row maximum.
pub fn row_softmax(m: &Matrix, additive_mask: &Matrix) -> Result<Matrix> {
    if m.rows != additive_mask.rows || m.cols != additive_mask.cols {
        return Err(Error::Shape(format!(
            "logits {}x{} vs mask {}x{}",
            m.rows, m.cols, additive_mask.rows, additive_mask.cols
        )));
    }
    let mut out = vec![0.0; m.data.len()];
    for i in 0..m.rows {
        let span = i * m.cols..(i + 1) * m.cols;
        if !softmax_into(m.row(i), additive_mask.row(i), &mut out[span]) {
            return Err(Error::DegenerateRow(i));
        }
    }
    Matrix::from_raw(m.rows, m.cols, out)
}

/// `softmax(q·kᵀ·s + mask)·v`, with `s = 1/√d` when `scale_by_sqrt_d` is set.
pub fn dense_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    additive_mask: &Matrix,
    scale_by_sqrt_d: bool,
) -> Result<Matrix> {
    if q.cols != k.cols {
        return Err(Error::Shape(format!("query width {} vs key width {}", q.cols, k.cols)));
    }
    if k.rows != v.rows {
        return Err(Error::Shape(format!("{} keys vs {} values", k.rows, v.rows)));
    }
    if additive_mask.rows != q.rows || additive_mask.cols != k.rows {
        return Err(Error::Shape(format!(
            "mask {}x{} for {} queries and {} keys",
            additive_mask.rows, additive_mask.cols, q.rows, k.rows
        )));
    }
    let mut scores = matmul(q, &k.transpose())?;
    let scale = score_scale(q.cols, scale_by_sqrt_d);
    for s in scores.data.iter_mut() {
        *s *= scale;
    }
    let weights = row_softmax(&scores, additive_mask)?;
    matmul(&weights, v)
}

#[inline]
pub(crate) fn score_scale(d: usize, scale_by_sqrt_d: bool) -> f64 {
    if scale_by_sqrt_d {
        1.0 / libm::sqrt(d as f64)
    } else {
        1.0
    }
}
