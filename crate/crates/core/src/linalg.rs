//! Sparse matrix assembly and direct linear solves.
//!
//! Energy Hessians and Newton Jacobians are assembled as coordinate
//! (triplet) lists. Duplicate entries are summed when the matrix is
//! materialized, so element contributions can be scattered without merging.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinate-format sparse matrix. Entries with equal indices add up.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparseMatrix { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, capacity: usize) -> Self {
        SparseMatrix { nrows, ncols, entries: Vec::with_capacity(capacity) }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SparseMatrix::with_capacity(n, n, n);
        for i in 0..n {
            m.push(i, i, 1.0);
        }
        m
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut m = SparseMatrix::new(a.nrows(), a.ncols());
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                let v = a[(i, j)];
                if v != 0.0 {
                    m.push(i, j, v);
                }
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    /// Adds `scale * other` with its top-left corner at `(row, col)`.
    pub fn add_block(&mut self, row: usize, col: usize, other: &SparseMatrix, scale: f64) {
        debug_assert!(row + other.nrows <= self.nrows && col + other.ncols <= self.ncols);
        self.entries
            .extend(other.entries.iter().map(|&(i, j, v)| (row + i, col + j, scale * v)));
    }

    /// Adds `scale * otherᵀ` with its top-left corner at `(row, col)`.
    pub fn add_block_transposed(&mut self, row: usize, col: usize, other: &SparseMatrix, scale: f64) {
        debug_assert!(row + other.ncols <= self.nrows && col + other.nrows <= self.ncols);
        self.entries
            .extend(other.entries.iter().map(|&(i, j, v)| (row + j, col + i, scale * v)));
    }

    pub fn add_dense_block(&mut self, row: usize, col: usize, block: &DMatrix<f64>, scale: f64) {
        for j in 0..block.ncols() {
            for i in 0..block.nrows() {
                let v = block[(i, j)];
                if v != 0.0 {
                    self.push(row + i, col + j, scale * v);
                }
            }
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            entries: self.entries.iter().map(|&(i, j, v)| (j, i, v)).collect(),
        }
    }

    pub fn scaled(mut self, s: f64) -> SparseMatrix {
        for e in &mut self.entries {
            e.2 *= s;
        }
        self
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.nrows, self.ncols);
        for &(i, j, v) in &self.entries {
            a[(i, j)] += v;
        }
        a
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = DVector::zeros(self.nrows);
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
        }
        y
    }

    /// Bilinear form `uᵀ A v`.
    pub fn bilinear(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.entries.iter().map(|&(i, j, a)| u[i] * a * v[j]).sum()
    }

    pub fn trace(&self) -> f64 {
        self.entries.iter().filter(|e| e.0 == e.1).map(|e| e.2).sum()
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<_> =
            self.entries.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .map_err(|e| Error::InvalidInput(format!("sparse assembly failed: {e:?}")))
    }
}

/// Direct solver backend for Newton linearizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolverKind {
    /// Dense LU with partial pivoting (nalgebra).
    #[default]
    DenseDirect,
    /// Supernodal sparse LU (faer).
    SparseDirect,
}

/// Relative residual above which a direct solve is reported as singular.
const SOLVE_CHECK: f64 = 1e-6;

/// Solves `A x = b`. Returns `None` when the system is numerically singular.
pub fn solve(a: &SparseMatrix, b: &DVector<f64>, kind: LinearSolverKind) -> Option<DVector<f64>> {
    assert_eq!(a.nrows, a.ncols, "square system expected");
    assert_eq!(b.len(), a.nrows);
    let x = match kind {
        LinearSolverKind::DenseDirect => a.to_dense().lu().solve(b)?,
        LinearSolverKind::SparseDirect => {
            let m = a.to_faer().ok()?;
            let lu = m.sp_lu().ok()?;
            let rhs = faer::Mat::from_fn(b.len(), 1, |i, _| b[i]);
            let sol = lu.solve(&rhs);
            DVector::from_fn(b.len(), |i, _| sol[(i, 0)])
        }
    };
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let bn = b.norm();
    if bn > 0.0 && (a.mul_vec(&x) - b).norm() > SOLVE_CHECK * bn {
        return None;
    }
    Some(x)
}

/// Orthonormalizes the rows of `rows` (modified Gram–Schmidt), dropping
/// rows that are linearly dependent on earlier ones.
pub fn orthonormal_rows(rows: &DMatrix<f64>) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for r in rows.row_iter() {
        let mut v: DVector<f64> = r.transpose();
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let p = b.dot(&v);
                v.axpy(-p, b, 1.0);
            }
        }
        let n = v.norm();
        if n > 1e-10 * scale {
            basis.push(v / n);
        }
    }
    let ncols = rows.ncols();
    DMatrix::from_fn(basis.len(), ncols, |i, j| basis[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseMatrix {
        let mut a = SparseMatrix::new(3, 3);
        a.push(0, 0, 4.0);
        a.push(0, 1, 1.0);
        a.push(1, 0, 1.0);
        a.push(1, 1, 3.0);
        a.push(2, 2, 2.0);
        a.push(2, 2, 0.5);
        a.push(1, 2, -1.0);
        a
    }

    #[test]
    fn duplicates_are_summed() {
        let a = sample().to_dense();
        assert_eq!(a[(2, 2)], 2.5);
    }

    #[test]
    fn dense_and_sparse_agree() {
        let a = sample();
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let xd = solve(&a, &b, LinearSolverKind::DenseDirect).unwrap();
        let xs = solve(&a, &b, LinearSolverKind::SparseDirect).unwrap();
        assert!((xd - &xs).norm() < 1e-13);
        assert!((a.mul_vec(&xs) - b).norm() < 1e-13);
    }

    #[test]
    fn singular_is_detected() {
        let mut a = SparseMatrix::new(2, 2);
        a.push(0, 0, 1.0);
        a.push(0, 1, 2.0);
        a.push(1, 0, 2.0);
        a.push(1, 1, 4.0);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        assert!(solve(&a, &b, LinearSolverKind::DenseDirect).is_none());
        assert!(solve(&a, &b, LinearSolverKind::SparseDirect).is_none());
    }

    #[test]
    fn saddle_point_system_solves_sparse() {
        // [H cᵀ; c 0] with a zero diagonal block needs pivoting.
        let mut a = SparseMatrix::new(3, 3);
        a.push(0, 0, 2.0);
        a.push(1, 1, 2.0);
        a.push(0, 2, 1.0);
        a.push(1, 2, 1.0);
        a.push(2, 0, 1.0);
        a.push(2, 1, 1.0);
        let b = DVector::from_vec(vec![1.0, -1.0, 0.0]);
        let x = solve(&a, &b, LinearSolverKind::SparseDirect).unwrap();
        assert!((x[0] + x[1]).abs() < 1e-14);
        assert!((x[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn block_transpose_placement() {
        let mut inner = SparseMatrix::new(1, 2);
        inner.push(0, 1, 7.0);
        let mut a = SparseMatrix::new(4, 4);
        a.add_block_transposed(1, 2, &inner, 2.0);
        assert_eq!(a.to_dense()[(2, 2)], 14.0);
    }

    #[test]
    fn gram_schmidt_drops_dependent_rows() {
        let rows = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0, 0.0, 1.0, 0.0]);
        let q = orthonormal_rows(&rows);
        assert_eq!(q.nrows(), 2);
        let g = &q * q.transpose();
        assert!((g - DMatrix::identity(2, 2)).norm() < 1e-14);
    }
}
