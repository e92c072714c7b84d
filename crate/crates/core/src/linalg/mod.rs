//! Sparse storage and the linear solvers used by both iteration schemes.

mod gmres;
mod lu;
mod ordering;
mod precond;

use std::fmt::Write as _;
use std::time::Instant;

pub use gmres::{gmres, GmresOptions, GmresStatus};
pub use lu::SparseLu;
pub use ordering::nested_dissection;
pub use precond::{FixedStressPreconditioner, IdentityOperator};

use crate::{Error, Result};

/// Anything that can be applied to a vector: matrices, factorizations, preconditioners.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) outside {nrows}x{ncols}");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|p| (cols[p], vals[p])));
            scratch.sort_by_key(|e| e.0);
            for &(j, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix { nrows: n, ncols: n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        CsrMatrix { nrows: n, ncols: n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: d.to_vec() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.col_idx[p], self.values[p]))
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `y += a * A x`
    pub fn mul_vec_add(&self, a: f64, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            *yi += a * self.row(i).map(|(j, v)| v * x[j]).sum::<f64>();
        }
    }

    /// `y = Aᵀ x`
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let trip: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &trip)
    }

    pub fn scaled(&self, a: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= a);
        m
    }

    /// `self + a * other`
    pub fn add_scaled(&self, a: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let trip: Vec<_> = self.triplets().chain(other.triplets().map(|(i, j, v)| (i, j, a * v))).collect();
        CsrMatrix::from_triplets(self.nrows, self.ncols, &trip)
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.nrows).map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        self.triplets().map(|(i, j, v)| (v - self.get(j, i)).abs()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.asymmetry() <= tol
    }

    /// Places blocks at row/column offsets into one matrix of size `nrows × ncols`.
    pub fn from_blocks(nrows: usize, ncols: usize, blocks: &[(usize, usize, f64, &CsrMatrix)]) -> CsrMatrix {
        let mut trip = Vec::with_capacity(blocks.iter().map(|b| b.3.nnz()).sum());
        for &(r0, c0, a, m) in blocks {
            if a == 0.0 {
                continue;
            }
            trip.extend(m.triplets().map(|(i, j, v)| (r0 + i, c0 + j, a * v)));
        }
        CsrMatrix::from_triplets(nrows, ncols, &trip)
    }

    /// Coordinate text, one `row col value` line per stored entry.
    pub fn to_coo_text(&self) -> String {
        let mut s = String::new();
        for (i, j, v) in self.triplets() {
            let _ = writeln!(s, "{i} {j} {v:.17e}");
        }
        s
    }

    pub(crate) fn raw_parts(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.row_ptr, &self.col_idx, &self.values)
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y)
    }
}

/// A square system split into named consecutive field blocks.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub blocks: Vec<(String, usize)>,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

impl BlockSystem {
    pub fn new(blocks: Vec<(String, usize)>, matrix: CsrMatrix, rhs: Vec<f64>) -> Result<Self> {
        let n: usize = blocks.iter().map(|b| b.1).sum();
        if matrix.nrows() != n || matrix.ncols() != n || rhs.len() != n {
            return Err(Error::Input(format!(
                "block sizes sum to {n}, matrix is {}x{}, rhs has {}",
                matrix.nrows(),
                matrix.ncols(),
                rhs.len()
            )));
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite right-hand side".into()));
        }
        Ok(BlockSystem { blocks, matrix, rhs })
    }

    /// Offset and length of a named block.
    pub fn slice(&self, name: &str) -> Option<(usize, usize)> {
        let mut off = 0;
        for (n, len) in &self.blocks {
            if n == name {
                return Some((off, *len));
            }
            off += len;
        }
        None
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverReport {
    pub method: String,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    pub seconds: f64,
    /// Preconditioned relative residual after each Krylov step (empty for direct solves).
    pub residual_history: Vec<f64>,
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Relative residual `‖b − A x‖ / ‖b‖` (absolute when `b = 0`).
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
    let bn = norm2(b);
    if bn > 0.0 {
        norm2(&r) / bn
    } else {
        norm2(&r)
    }
}

/// Factorizes and solves one system directly.
pub fn lu_solve(system: &BlockSystem) -> Result<(Vec<f64>, SolverReport)> {
    let start = Instant::now();
    let lu = SparseLu::factor(&system.matrix)?;
    let x = lu.solve(&system.rhs);
    let relres = relative_residual(&system.matrix, &x, &system.rhs);
    Ok((
        x,
        SolverReport {
            method: "lu".into(),
            iterations: 1,
            relative_residual: relres,
            converged: relres.is_finite(),
            seconds: start.elapsed().as_secs_f64(),
            residual_history: Vec::new(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_are_summed_and_sorted() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 3.0), (1, 1, -1.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 2), 4.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.row(0).map(|e| e.0).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![6.0, -1.0]);
        assert_eq!(m.mul_transpose_vec(&[1.0, 2.0]), vec![2.0, -2.0, 4.0]);
        assert_eq!(m.transpose().get(2, 0), 4.0);
    }

    #[test]
    fn symmetry_check() {
        let s = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0), (0, 0, 3.0)]);
        assert!(s.is_symmetric(1e-12));
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.5)]);
        assert!(!a.is_symmetric(1e-12));
    }

    #[test]
    fn blocks_and_coo_dump() {
        let i2 = CsrMatrix::identity(2);
        let m = CsrMatrix::from_blocks(4, 4, &[(0, 0, 1.0, &i2), (2, 0, -2.0, &i2), (2, 2, 1.0, &i2)]);
        assert_eq!(m.get(3, 1), -2.0);
        assert_eq!(m.to_coo_text().lines().count(), 6);
        let sys = BlockSystem::new(vec![("u".into(), 2), ("p".into(), 2)], m, vec![1.0; 4]).unwrap();
        assert_eq!(sys.slice("p"), Some((2, 2)));
        assert!(BlockSystem::new(vec![("u".into(), 3)], CsrMatrix::identity(2), vec![0.0; 2]).is_err());
    }

    #[test]
    fn lu_solve_small_systems() {
        let id = BlockSystem::new(vec![("x".into(), 3)], CsrMatrix::identity(3), vec![1.0, -2.0, 3.0]).unwrap();
        let (x, rep) = lu_solve(&id).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.0]);
        assert!(rep.relative_residual < 1e-15);
        let d = BlockSystem::new(vec![("x".into(), 2)], CsrMatrix::diagonal(&[2.0, 4.0]), vec![2.0, 4.0]).unwrap();
        let (x, _) = lu_solve(&d).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
    }
}
