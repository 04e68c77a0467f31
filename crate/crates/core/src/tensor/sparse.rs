use crate::scalar::Scalar;

use super::{Tensor, TensorError};

/// Compressed sparse row matrix. Column indices within a row are sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr<T> {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut offsets = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < rows && c < cols);
            if last == Some((r, c)) {
                *values.last_mut().expect("non-empty") += v;
                continue;
            }
            offsets[r + 1] += 1;
            indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            offsets[r + 1] += offsets[r];
        }
        Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Iterates `(col, value)` of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Tensor<T> {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.set(r, c, out.get(r, c) + v);
            }
        }
        out
    }

    /// `self · dense`.
    pub fn matmul(&self, dense: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        if self.cols != dense.rows() {
            return Err(TensorError::shape(
                "sparse matmul",
                [self.rows, self.cols],
                dense.shape(),
            ));
        }
        let m = dense.cols();
        let mut out = Tensor::zeros(self.rows, m);
        for r in 0..self.rows {
            let orow = out.row_mut(r);
            for k in self.offsets[r]..self.offsets[r + 1] {
                let v = self.values[k];
                let drow = dense.row(self.indices[k]);
                for (o, &d) in orow.iter_mut().zip(drow) {
                    *o += v * d;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`, used for gradients of non-symmetric operators.
    pub fn transpose_matmul(&self, dense: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        if self.rows != dense.rows() {
            return Err(TensorError::shape(
                "sparse transpose matmul",
                [self.cols, self.rows],
                dense.shape(),
            ));
        }
        let m = dense.cols();
        let mut out = Tensor::zeros(self.cols, m);
        for r in 0..self.rows {
            let drow: Vec<T> = dense.row(r).to_vec();
            for k in self.offsets[r]..self.offsets[r + 1] {
                let v = self.values[k];
                let orow = out.row_mut(self.indices[k]);
                for (o, &d) in orow.iter_mut().zip(&drow) {
                    *o += v * d;
                }
            }
        }
        Ok(out)
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let dense = self.to_dense();
        dense.max_abs_diff(&dense.transpose()) <= tol
    }
}
