//! Graph shift operators.

use ndarray::{Array1, Array2, ArrayView2};

use super::sparse::CsrMatrix;
use crate::error::{bail, Result};
use crate::scalar::Scalar;

const POWER_ITERATIONS: usize = 200;
const POWER_TOLERANCE: f64 = 1e-10;
const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Sparse symmetric shift operator with a cached spectral norm.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphShift<T> {
    matrix: CsrMatrix<T>,
    spectral_norm: T,
}

impl<T: Scalar> GraphShift<T> {
    /// Builds a shift from a dense symmetric adjacency. The diagonal is
    /// dropped; with `normalize` every weight is divided by the spectral norm.
    pub fn from_adjacency(adjacency: ArrayView2<'_, T>, normalize: bool) -> Result<Self> {
        let (r, c) = adjacency.dim();
        if r != c {
            bail!(Structural, "adjacency must be square, got {r}x{c}");
        }
        if r == 0 {
            bail!(DegenerateGraph, "adjacency has no nodes");
        }
        let tol = T::of(SYMMETRY_TOLERANCE);
        for i in 0..r {
            for j in 0..c {
                let v = adjacency[[i, j]];
                if !v.is_finite() {
                    bail!(Structural, "non-finite adjacency entry at ({i}, {j})");
                }
                if j > i && (v - adjacency[[j, i]]).abs() > tol {
                    bail!(Structural, "adjacency not symmetric at ({i}, {j})");
                }
            }
        }
        let mut trips = Vec::new();
        for i in 0..r {
            for j in 0..c {
                if i != j && adjacency[[i, j]] != T::zero() {
                    // symmetrize exactly from the upper triangle
                    let v = if j > i { adjacency[[i, j]] } else { adjacency[[j, i]] };
                    trips.push((i, j, v));
                }
            }
        }
        Self::from_csr(CsrMatrix::from_triplets(r, c, trips)?, normalize)
    }

    /// Wraps an already symmetric sparse matrix; the diagonal is kept.
    pub fn from_csr(matrix: CsrMatrix<T>, normalize: bool) -> Result<Self> {
        if matrix.n_rows() != matrix.n_cols() {
            bail!(Structural, "shift must be square");
        }
        if !matrix.is_symmetric(T::of(SYMMETRY_TOLERANCE)) {
            bail!(Structural, "shift must be symmetric");
        }
        if matrix.nnz() == 0 {
            bail!(DegenerateGraph, "all-zero shift operator");
        }
        let norm = spectral_norm(&matrix);
        if !(norm > T::zero()) || !norm.is_finite() {
            bail!(DegenerateGraph, "spectral norm is {norm}");
        }
        if normalize {
            Ok(Self {
                matrix: matrix.scale(T::one() / norm),
                spectral_norm: T::one(),
            })
        } else {
            Ok(Self {
                matrix,
                spectral_norm: norm,
            })
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    pub fn spectral_norm(&self) -> T {
        self.spectral_norm
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        self.matrix.get(i, j)
    }

    pub fn to_dense(&self) -> Array2<T> {
        self.matrix.to_dense()
    }

    /// Weighted degree: sum of incident weights per node.
    pub fn degrees(&self) -> Vec<T> {
        (0..self.n_nodes())
            .map(|r| self.matrix.row(r).map(|(_, v)| v).sum())
            .collect()
    }

    /// Shift induced on a node subset, without renormalization.
    pub fn induced(&self, kept: &[usize]) -> CsrMatrix<T> {
        self.matrix.submatrix(kept)
    }
}

/// Power-iteration estimate of the largest absolute eigenvalue.
///
/// The start vector is `1 + |row sums|`, which is permutation-covariant, so
/// the estimate does not depend on node ordering beyond rounding.
pub fn spectral_norm<T: Scalar>(m: &CsrMatrix<T>) -> T {
    let n = m.n_rows();
    let mut v = Array1::from_iter((0..n).map(|r| T::one() + m.row(r).map(|(_, w)| w.abs()).sum()));
    normalize_vec(&mut v);
    let tol = T::of(POWER_TOLERANCE);
    let mut estimate = T::zero();
    for _ in 0..POWER_ITERATIONS {
        let mut next = Array1::zeros(n);
        for r in 0..n {
            next[r] = m.row(r).map(|(c, w)| w * v[c]).sum::<T>();
        }
        let norm = next.dot(&next).sqrt();
        if norm == T::zero() {
            // start vector in the null space; fall back to a basis sweep
            return basis_sweep(m);
        }
        next.mapv_inplace(|x| x / norm);
        v = next;
        let delta = (norm - estimate).abs();
        estimate = norm;
        if delta <= tol * norm {
            break;
        }
    }
    estimate
}

fn basis_sweep<T: Scalar>(m: &CsrMatrix<T>) -> T {
    (0..m.n_rows())
        .map(|r| m.row(r).map(|(_, w)| w * w).sum::<T>().sqrt())
        .fold(T::zero(), T::max)
}

fn normalize_vec<T: Scalar>(v: &mut Array1<T>) {
    let n = v.dot(v).sqrt();
    if n > T::zero() {
        v.mapv_inplace(|x| x / n);
    }
}
