//! Dense row-major matrices and the handful of kernels the engine needs.
//!
//! Every reduction runs in a fixed sequential order so that results are
//! bitwise reproducible and a batch row is computed with exactly the same
//! operations as the same row evaluated on its own.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Raised when a matrix is built from a buffer of the wrong length.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("buffer of length {len} cannot form a {rows}x{cols} matrix")]
pub struct ShapeError {
    pub rows: usize,
    pub cols: usize,
    pub len: usize,
}

/// A `rows x cols` matrix stored in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> Tensor2<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self, ShapeError> {
        if values.len() != rows * cols {
            return Err(ShapeError {
                rows,
                cols,
                len: values.len(),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    /// Builds a matrix from equally long rows. An empty slice gives a `0 x 0` matrix.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self, ShapeError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(ShapeError {
                    rows: rows.len(),
                    cols,
                    len: values.len() + row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values,
        })
    }

    /// A single-row matrix.
    pub fn row_vector(values: &[T]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            values: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out.values[i * n + i] = T::one();
        }
        out
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
    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.values[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[T] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [T] {
        &mut self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor2<U> {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        out
    }

    /// Gathers the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            values,
        }
    }

    /// Gathers the given columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            values.extend(indices.iter().map(|&c| row[c]));
        }
        Self {
            rows: self.rows,
            cols: indices.len(),
            values,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self · otherᵀ` where `self` is `n x k` and `other` is `m x k`.
    ///
    /// Each output entry is a left-to-right dot product over `k`.
    pub fn matmul_transb(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "matmul_transb inner dimension");
        let (n, m, k) = (self.rows, other.rows, self.cols);
        let mut out = Self::zeros(n, m);
        for i in 0..n {
            let a = &self.values[i * k..(i + 1) * k];
            let dst = &mut out.values[i * m..(i + 1) * m];
            for (j, slot) in dst.iter_mut().enumerate() {
                let b = &other.values[j * k..(j + 1) * k];
                let mut acc = T::zero();
                for (&x, &y) in a.iter().zip(b) {
                    acc += x * y;
                }
                *slot = acc;
            }
        }
        out
    }

    /// `self · other` where `self` is `n x m` and `other` is `m x k`.
    ///
    /// Entry `(i, c)` accumulates over `m` in increasing order.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let (n, m, k) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(n, k);
        for i in 0..n {
            let dst = &mut out.values[i * k..(i + 1) * k];
            for j in 0..m {
                let a = self.values[i * m + j];
                if a == T::zero() {
                    continue;
                }
                let b = &other.values[j * k..(j + 1) * k];
                for (slot, &y) in dst.iter_mut().zip(b) {
                    *slot += a * y;
                }
            }
        }
        out
    }

    /// `selfᵀ · other` where `self` is `n x m` and `other` is `n x k`.
    ///
    /// Entry `(j, c)` accumulates over the `n` rows in increasing order.
    pub fn transpose_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "transpose_matmul row count");
        let (n, m, k) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(m, k);
        for i in 0..n {
            let b = &other.values[i * k..(i + 1) * k];
            for j in 0..m {
                let a = self.values[i * m + j];
                if a == T::zero() {
                    continue;
                }
                let dst = &mut out.values[j * k..(j + 1) * k];
                for (slot, &y) in dst.iter_mut().zip(b) {
                    *slot += a * y;
                }
            }
        }
        out
    }

    /// Adds `row` to every row.
    pub fn add_row(&self, row: &[T]) -> Self {
        assert_eq!(row.len(), self.cols, "add_row width");
        let mut out = self.clone();
        for r in 0..self.rows {
            for (v, &b) in out.row_mut(r).iter_mut().zip(row) {
                *v += b;
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "add shape");
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape");
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "hadamard shape");
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a * b).collect(),
        }
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    /// Column sums, accumulated over rows in increasing order.
    pub fn column_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            for (acc, &v) in out.iter_mut().zip(self.row(r)) {
                *acc += v;
            }
        }
        out
    }

    /// Index of the largest entry of each row; the first index wins ties.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}
