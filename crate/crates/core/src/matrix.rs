//! Dense row-major matrix of finite `f64` values.

use crate::error::{Error, Result};

/// Dense data matrix, row-major. Entries are validated to be finite on
/// construction so the numerical code never has to re-check.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    /// Build from a row-major value buffer.
    pub fn from_vec(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidInput(format!(
                "matrix dimensions must be positive, got {n_rows}x{n_cols}"
            )));
        }
        if values.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values for a {n_rows}x{n_cols} matrix, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at ({}, {})",
                pos / n_cols,
                pos % n_cols
            )));
        }
        Ok(Self { n_rows, n_cols, values })
    }

    /// Build by evaluating `f(row, col)` at every position.
    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                values.push(f(i, j));
            }
        }
        Self::from_vec(n_rows, n_cols, values)
    }

    /// Build from nested rows (convenient in tests and CSV parsing).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("matrix needs at least one row".into()));
        }
        let n_cols = rows[0].len();
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::DimensionMismatch("rows have unequal lengths".into()));
        }
        Self::from_vec(rows.len(), n_cols, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.values[row * self.n_cols + col]
    }

    /// Contiguous view of one row.
    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        let start = row * self.n_cols;
        &self.values[start..start + self.n_cols]
    }

    /// Copy of one column.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, col)).collect()
    }

    /// Full row-major buffer.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn transposed(&self) -> DataMatrix {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.n_cols {
            for i in 0..self.n_rows {
                values.push(self.get(i, j));
            }
        }
        DataMatrix { n_rows: self.n_cols, n_cols: self.n_rows, values }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Matrix scaled by a finite factor.
    pub fn scaled(&self, factor: f64) -> Result<DataMatrix> {
        if !factor.is_finite() {
            return Err(Error::Domain("scale factor must be finite".into()));
        }
        DataMatrix::from_vec(
            self.n_rows,
            self.n_cols,
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    /// Subtract the rank-one layer `lambda * u v^T` in place (deflation step).
    pub(crate) fn deflate_in_place(&mut self, lambda: f64, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.n_rows);
        debug_assert_eq!(v.len(), self.n_cols);
        for i in 0..self.n_rows {
            let scale = lambda * u[i];
            let row = &mut self.values[i * self.n_cols..(i + 1) * self.n_cols];
            for (x, &vj) in row.iter_mut().zip(v) {
                *x -= scale * vj;
            }
        }
    }
}
