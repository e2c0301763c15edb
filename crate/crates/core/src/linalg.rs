//! Dense row-major matrices and the normalization primitives the losses are built from.
//!
//! Everything runs in `f64` with a fixed left-to-right summation order, so two
//! runs over the same inputs produce bit-identical results.

use std::fmt;

use crate::error::{Error, Result};

/// Norm guard used when the caller does not supply one.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Dense row-major matrix of sample embeddings: rows are samples, columns are
/// feature dimensions.
#[derive(Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Direction along which a per-vector operation is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Each row is one vector.
    Rows,
    /// Each column is one vector.
    Cols,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major data, rejecting empty shapes,
    /// length mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix {rows}x{cols}");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} values, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw buffer. Callers are responsible for keeping
    /// entries finite; public operations re-check where it matters.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    /// Gathers the given rows (repeats allowed) into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::shape("no rows selected"));
        }
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::invalid(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    /// Scales row `i` by `scales[i]`.
    pub fn scale_rows(&self, scales: &[f64]) -> Result<Self> {
        if scales.len() != self.rows {
            return Err(Error::shape("one scale per row required"));
        }
        let mut out = self.clone();
        for (i, &s) in scales.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        Ok(out)
    }

    /// Scales column `j` by `scales[j]`.
    pub fn scale_cols(&self, scales: &[f64]) -> Result<Self> {
        if scales.len() != self.cols {
            return Err(Error::shape("one scale per column required"));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for (v, &s) in out.row_mut(i).iter_mut().zip(scales) {
                *v *= s;
            }
        }
        Ok(out)
    }

    /// Squared L2 norm of each column.
    pub fn col_sq_norms(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (a, v) in acc.iter_mut().zip(self.row(i)) {
                *a += v * v;
            }
        }
        acc
    }

    /// Per-column mean and population standard deviation.
    pub fn col_mean_std(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.rows as f64;
        let mut mean = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (m, v) in mean.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.cols];
        for i in 0..self.rows {
            for ((s, v), m) in var.iter_mut().zip(self.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        (mean, std)
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

impl fmt::Debug for EmbeddingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EmbeddingMatrix({}x{}) [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "{:?}", self.row(i))?;
            if i + 1 < self.rows {
                write!(f, ", ")?;
            }
        }
        if self.rows > 8 {
            write!(f, "...")?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine of two vectors, each divided by `max(norm, eps)` first.
pub fn cosine(a: &[f64], b: &[f64], eps: f64) -> f64 {
    dot(a, b) / (norm(a).max(eps) * norm(b).max(eps))
}

/// Divides every vector along `axis` by `max(‖v‖, eps)`.
///
/// Zero vectors stay zero instead of erroring.
pub fn l2_normalize(m: &EmbeddingMatrix, axis: Axis, eps: f64) -> Result<EmbeddingMatrix> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid("eps must be positive"));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let mut out = m.clone();
    match axis {
        Axis::Rows => {
            for i in 0..m.rows {
                let n = norm(m.row(i)).max(eps);
                out.row_mut(i).iter_mut().for_each(|v| *v /= n);
            }
        }
        Axis::Cols => {
            let norms: Vec<f64> = m.col_sq_norms().into_iter().map(|s| s.sqrt().max(eps)).collect();
            for i in 0..m.rows {
                for (v, n) in out.row_mut(i).iter_mut().zip(&norms) {
                    *v /= n;
                }
            }
        }
    }
    Ok(out)
}

/// `(1/rows) Σ_i S_i · T_i`.
pub fn mean_rowwise_dot(s: &EmbeddingMatrix, t: &EmbeddingMatrix) -> Result<f64> {
    s.check_same_shape(t)?;
    let total = (0..s.rows).fold(0.0, |acc, i| acc + dot(s.row(i), t.row(i)));
    Ok(total / s.rows as f64)
}

/// N×N matrix of row cosines, clamped to [-1, 1].
pub fn pairwise_cosine(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let unit = l2_normalize(m, Axis::Rows, DEFAULT_EPS)?;
    let n = m.rows;
    let mut out = EmbeddingMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let c = dot(unit.row(i), unit.row(j)).clamp(-1.0, 1.0);
            out.set(i, j, c);
            out.set(j, i, c);
        }
    }
    Ok(out)
}

/// `A · B` for `A: m×k`, `B: k×n`.
pub fn matmul(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if a.cols != b.rows {
        return Err(Error::shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = EmbeddingMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b.data[p * b.cols..(p + 1) * b.cols];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}
