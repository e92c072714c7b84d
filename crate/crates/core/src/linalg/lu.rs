//! Left-looking sparse LU with threshold partial pivoting.
//!
//! The matrix is equilibrated (rows, then columns, scaled to unit max norm) and
//! columns are taken in nested-dissection order. Within each column the
//! symmetric (diagonal) pivot is kept whenever it is within `PIVOT_TOL` of the
//! column maximum, which keeps fill close to the symmetric prediction.

use super::{nested_dissection, CsrMatrix, LinearOperator};
use crate::{Error, Result};

const PIVOT_TOL: f64 = 0.1;

/// Compressed columns; row indices refer to pivot positions after factorization.
#[derive(Debug, Clone, Default)]
struct Csc {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    col_order: Vec<usize>,
    // pinv[row] = pivot position of that row
    pinv: Vec<usize>,
    lower: Csc,
    upper: Csc,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Factorization(format!("matrix is {}x{}, not square", n, a.ncols())));
        }
        let (row_ptr, col_idx, values) = a.raw_parts();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("matrix has non-finite entries".into()));
        }

        let mut row_scale = vec![1.0; n];
        for i in 0..n {
            let m = values[row_ptr[i]..row_ptr[i + 1]].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if m == 0.0 {
                return Err(Error::Factorization(format!("row {i} is structurally empty")));
            }
            row_scale[i] = 1.0 / m;
        }
        let mut col_max = vec![0.0_f64; n];
        for i in 0..n {
            for p in row_ptr[i]..row_ptr[i + 1] {
                let j = col_idx[p];
                col_max[j] = col_max[j].max((values[p] * row_scale[i]).abs());
            }
        }
        if let Some(j) = col_max.iter().position(|&m| m == 0.0) {
            return Err(Error::Factorization(format!("column {j} is structurally empty")));
        }
        let col_scale: Vec<f64> = col_max.iter().map(|m| 1.0 / m).collect();

        // scaled matrix in compressed-column form
        let mut counts = vec![0usize; n + 1];
        for &j in col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut a_rows = vec![0usize; col_idx.len()];
        let mut a_vals = vec![0.0; col_idx.len()];
        for i in 0..n {
            for p in row_ptr[i]..row_ptr[i + 1] {
                let j = col_idx[p];
                a_rows[next[j]] = i;
                a_vals[next[j]] = values[p] * row_scale[i] * col_scale[j];
                next[j] += 1;
            }
        }
        let a_csc = Csc { col_ptr: counts, row_idx: a_rows, values: a_vals };

        let col_order = nested_dissection(a);
        let mut lu = Factorizer::new(n);
        lu.run(&a_csc, &col_order)?;
        let Factorizer { pinv, mut lower, upper, .. } = lu;
        let pinv: Vec<usize> = pinv.into_iter().map(|p| p as usize).collect();
        for r in lower.row_idx.iter_mut() {
            *r = pinv[*r];
        }
        Ok(SparseLu { n, col_order, pinv, lower, upper, row_scale, col_scale })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L + U`.
    pub fn fill(&self) -> usize {
        self.lower.values.len() + self.upper.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        x
    }

    pub fn solve_into(&self, b: &[f64], out: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            y[self.pinv[i]] = b[i] * self.row_scale[i];
        }
        let l = &self.lower;
        for j in 0..self.n {
            let yj = y[j];
            if yj != 0.0 {
                for p in l.col_ptr[j] + 1..l.col_ptr[j + 1] {
                    y[l.row_idx[p]] -= l.values[p] * yj;
                }
            }
        }
        let u = &self.upper;
        for j in (0..self.n).rev() {
            let last = u.col_ptr[j + 1] - 1;
            y[j] /= u.values[last];
            let yj = y[j];
            if yj != 0.0 {
                for p in u.col_ptr[j]..last {
                    y[u.row_idx[p]] -= u.values[p] * yj;
                }
            }
        }
        for (k, &col) in self.col_order.iter().enumerate() {
            out[col] = y[k] * self.col_scale[col];
        }
    }
}

impl LinearOperator for SparseLu {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.solve_into(x, y)
    }
}

struct Factorizer {
    n: usize,
    pinv: Vec<isize>,
    lower: Csc,
    upper: Csc,
    x: Vec<f64>,
    // reach output and DFS stack share `xi[..n]`; DFS edge positions live in `xi[n..]`
    xi: Vec<usize>,
    marked: Vec<bool>,
}

impl Factorizer {
    fn new(n: usize) -> Self {
        Factorizer {
            n,
            pinv: vec![-1; n],
            lower: Csc { col_ptr: Vec::with_capacity(n + 1), ..Default::default() },
            upper: Csc { col_ptr: Vec::with_capacity(n + 1), ..Default::default() },
            x: vec![0.0; n],
            xi: vec![0; 2 * n],
            marked: vec![false; n],
        }
    }

    fn run(&mut self, a: &Csc, col_order: &[usize]) -> Result<()> {
        let n = self.n;
        for (k, &col) in col_order.iter().enumerate() {
            self.lower.col_ptr.push(self.lower.values.len());
            self.upper.col_ptr.push(self.upper.values.len());
            let top = self.sparse_solve(a, col);

            let mut ipiv = usize::MAX;
            let mut best = -1.0;
            for p in top..n {
                let i = self.xi[p];
                if self.pinv[i] < 0 {
                    let t = self.x[i].abs();
                    if t > best {
                        best = t;
                        ipiv = i;
                    }
                } else {
                    self.upper.row_idx.push(self.pinv[i] as usize);
                    self.upper.values.push(self.x[i]);
                }
            }
            if ipiv == usize::MAX || !(best > 0.0) {
                return Err(Error::Factorization(format!("singular matrix: no pivot for column {col} (step {k})")));
            }
            if self.pinv[col] < 0 && self.x[col].abs() >= PIVOT_TOL * best {
                ipiv = col;
            }
            let pivot = self.x[ipiv];
            self.upper.row_idx.push(k);
            self.upper.values.push(pivot);
            self.pinv[ipiv] = k as isize;
            self.lower.row_idx.push(ipiv);
            self.lower.values.push(1.0);
            for p in top..n {
                let i = self.xi[p];
                if self.pinv[i] < 0 {
                    self.lower.row_idx.push(i);
                    self.lower.values.push(self.x[i] / pivot);
                }
                self.x[i] = 0.0;
            }
        }
        self.lower.col_ptr.push(self.lower.values.len());
        self.upper.col_ptr.push(self.upper.values.len());
        Ok(())
    }

    /// Solves `L x = A[:, col]` for the current partial `L`; the nonzero pattern is `xi[top..n]`
    /// in topological order.
    fn sparse_solve(&mut self, a: &Csc, col: usize) -> usize {
        let top = self.reach(a, col);
        for p in top..self.n {
            self.x[self.xi[p]] = 0.0;
        }
        for p in a.col_ptr[col]..a.col_ptr[col + 1] {
            self.x[a.row_idx[p]] = a.values[p];
        }
        for px in top..self.n {
            let j = self.xi[px];
            let jj = self.pinv[j];
            if jj < 0 {
                continue;
            }
            let jj = jj as usize;
            let xj = self.x[j];
            // first entry of each L column is the unit diagonal
            for p in self.lower.col_ptr[jj] + 1..self.lower.col_ptr[jj + 1] {
                self.x[self.lower.row_idx[p]] -= self.lower.values[p] * xj;
            }
        }
        top
    }

    fn reach(&mut self, a: &Csc, col: usize) -> usize {
        let mut top = self.n;
        for p in a.col_ptr[col]..a.col_ptr[col + 1] {
            let i = a.row_idx[p];
            if !self.marked[i] {
                top = self.dfs(i, top);
            }
        }
        for p in top..self.n {
            self.marked[self.xi[p]] = false;
        }
        top
    }

    fn dfs(&mut self, start: usize, mut top: usize) -> usize {
        let n = self.n;
        let mut head: isize = 0;
        self.xi[0] = start;
        while head >= 0 {
            let h = head as usize;
            let j = self.xi[h];
            let jnew = self.pinv[j];
            if !self.marked[j] {
                self.marked[j] = true;
                self.xi[n + h] = if jnew < 0 { 0 } else { self.lower.col_ptr[jnew as usize] };
            }
            let end = if jnew < 0 { 0 } else { self.lower.col_ptr[jnew as usize + 1] };
            let mut done = true;
            let mut p = self.xi[n + h];
            while p < end {
                let i = self.lower.row_idx[p];
                if !self.marked[i] {
                    self.xi[n + h] = p;
                    head += 1;
                    self.xi[head as usize] = i;
                    done = false;
                    break;
                }
                p += 1;
            }
            if done {
                head -= 1;
                top -= 1;
                self.xi[top] = j;
            }
        }
        top
    }
}
