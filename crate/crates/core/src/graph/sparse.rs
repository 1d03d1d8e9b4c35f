//! Compressed-sparse-row storage with sorted column indices.

use ndarray::{Array2, ArrayView2};

use crate::error::{bail, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from (row, col, value) triplets. Duplicates are summed and
    /// explicit zeros are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut trips: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        for &(r, c, _) in &trips {
            if r >= n_rows || c >= n_cols {
                bail!(Structural, "triplet ({r}, {c}) outside {n_rows}x{n_cols}");
            }
        }
        trips.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(trips.len());
        let mut values: Vec<T> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows_of = Vec::with_capacity(trips.len());
        for (r, c, v) in trips {
            if last == Some((r, c)) {
                let top = values.len() - 1;
                values[top] = values[top] + v;
            } else {
                indices.push(c);
                values.push(v);
                rows_of.push(r);
                last = Some((r, c));
            }
        }
        // drop zeros after merging duplicates
        let mut k = 0;
        let mut kept_rows = Vec::with_capacity(rows_of.len());
        for i in 0..values.len() {
            if values[i] != T::zero() {
                indices[k] = indices[i];
                values[k] = values[i];
                kept_rows.push(rows_of[i]);
                k += 1;
            }
        }
        indices.truncate(k);
        values.truncate(k);
        for r in kept_rows {
            indptr[r + 1] += 1;
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(dense: ArrayView2<'_, T>) -> Self {
        let (n_rows, n_cols) = dense.dim();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..n_rows {
            for c in 0..n_cols {
                let v = dense[[r, c]];
                if v != T::zero() {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries of one row as (col, value) pairs in column order.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => T::zero(),
        }
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    pub fn scale(&self, factor: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = *v * factor);
        out
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.n_rows == self.n_cols
            && self.iter().all(|(r, c, v)| (self.get(c, r) - v).abs() <= tol)
    }

    /// `self · x` for a dense right-hand side.
    pub fn matmul(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if x.nrows() != self.n_cols {
            bail!(
                Structural,
                "sparse {}x{} times dense {}x{}",
                self.n_rows,
                self.n_cols,
                x.nrows(),
                x.ncols()
            );
        }
        let f = x.ncols();
        let x = x.as_standard_layout();
        let src = x.as_slice().expect("standard layout");
        let mut out = vec![T::zero(); self.n_rows * f];
        for (r, dst) in out.chunks_exact_mut(f.max(1)).enumerate().take(self.n_rows) {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let (c, v) = (self.indices[k], self.values[k]);
                for (d, &s) in dst.iter_mut().zip(&src[c * f..(c + 1) * f]) {
                    *d = *d + v * s;
                }
            }
        }
        Ok(Array2::from_shape_vec((self.n_rows, f), out).expect("shape matches buffer"))
    }

    /// `selfᵀ · g` without materializing the transpose.
    pub fn transpose_matmul(&self, g: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if g.nrows() != self.n_rows {
            bail!(
                Structural,
                "sparse transpose {}x{} times dense {}x{}",
                self.n_cols,
                self.n_rows,
                g.nrows(),
                g.ncols()
            );
        }
        let f = g.ncols();
        let g = g.as_standard_layout();
        let src = g.as_slice().expect("standard layout");
        let mut out = vec![T::zero(); self.n_cols * f];
        for r in 0..self.n_rows {
            let row = &src[r * f..(r + 1) * f];
            for k in self.indptr[r]..self.indptr[r + 1] {
                let (c, v) = (self.indices[k], self.values[k]);
                for (d, &s) in out[c * f..(c + 1) * f].iter_mut().zip(row) {
                    *d = *d + v * s;
                }
            }
        }
        Ok(Array2::from_shape_vec((self.n_cols, f), out).expect("shape matches buffer"))
    }

    /// Rows and columns restricted to `kept` (in the given order).
    pub fn submatrix(&self, kept: &[usize]) -> Self {
        let mut position = vec![usize::MAX; self.n_cols];
        for (new, &old) in kept.iter().enumerate() {
            position[old] = new;
        }
        let mut indptr = Vec::with_capacity(kept.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for &old_r in kept {
            let mut row: Vec<(usize, T)> = self
                .row(old_r)
                .filter_map(|(c, v)| (position[c] != usize::MAX).then(|| (position[c], v)))
                .collect();
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            n_rows: kept.len(),
            n_cols: kept.len(),
            indptr,
            indices,
            values,
        }
    }

    /// Block-diagonal matrix with `copies` copies of `self`, used to apply
    /// one shift to a stacked mini-batch of graph signals.
    pub fn block_diagonal(&self, copies: usize) -> Self {
        let nnz = self.nnz();
        let mut indptr = Vec::with_capacity(self.n_rows * copies + 1);
        let mut indices = Vec::with_capacity(nnz * copies);
        let mut values = Vec::with_capacity(nnz * copies);
        indptr.push(0);
        for b in 0..copies {
            let offset = b * self.n_cols;
            for r in 0..self.n_rows {
                for (c, v) in self.row(r) {
                    indices.push(c + offset);
                    values.push(v);
                }
                indptr.push(indices.len());
            }
        }
        Self {
            n_rows: self.n_rows * copies,
            n_cols: self.n_cols * copies,
            indptr,
            indices,
            values,
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}
