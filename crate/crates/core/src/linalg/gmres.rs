//! Restarted GMRES with left preconditioning and modified Gram–Schmidt.

use std::time::Instant;

use super::{dot, norm2, LinearOperator, SolverReport};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GmresOptions {
    pub restart: usize,
    /// Relative tolerance on the preconditioned residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { restart: 50, tol: 1e-10, max_iter: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmresStatus {
    Converged,
    /// Exact solution found inside the Krylov space.
    HappyBreakdown,
    /// A full restart cycle made no progress.
    Stagnation,
    MaxIterations,
}

impl GmresStatus {
    pub fn converged(self) -> bool {
        matches!(self, GmresStatus::Converged | GmresStatus::HappyBreakdown)
    }
}

/// Solves `A x = b` with left preconditioner `m` (an approximation of `A⁻¹`).
pub fn gmres(
    a: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    m: &dyn LinearOperator,
    opts: &GmresOptions,
) -> (Vec<f64>, GmresStatus, SolverReport) {
    let start = Instant::now();
    let n = a.dim();
    assert_eq!(b.len(), n);
    assert_eq!(m.dim(), n, "preconditioner dimension mismatch");
    let restart = opts.restart.max(1);
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());

    let mut tmp = vec![0.0; n];
    let mut mb = vec![0.0; n];
    m.apply(b, &mut mb);
    let bnorm = norm2(&mb);
    let mut history = Vec::new();
    let report = |iters: usize, relres: f64, conv: bool, hist: Vec<f64>| SolverReport {
        method: "gmres".into(),
        iterations: iters,
        relative_residual: relres,
        converged: conv,
        seconds: start.elapsed().as_secs_f64(),
        residual_history: hist,
    };
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return (x, GmresStatus::Converged, report(0, 0.0, true, history));
    }

    let residual = |x: &[f64], tmp: &mut Vec<f64>| -> Vec<f64> {
        a.apply(x, tmp);
        let r: Vec<f64> = b.iter().zip(tmp.iter()).map(|(bi, ai)| bi - ai).collect();
        let mut z = vec![0.0; n];
        m.apply(&r, &mut z);
        z
    };

    let mut r = residual(&x, &mut tmp);
    let mut beta = norm2(&r);
    let mut iters = 0;
    let mut status = GmresStatus::MaxIterations;
    loop {
        if beta / bnorm <= opts.tol {
            status = GmresStatus::Converged;
            break;
        }
        if iters >= opts.max_iter {
            break;
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        let mut happy = false;
        for j in 0..restart {
            a.apply(&basis[j], &mut tmp);
            let mut w = vec![0.0; n];
            m.apply(&tmp, &mut w);
            iters += 1;
            for (i, v) in basis.iter().enumerate() {
                let h = dot(&w, v);
                hess[i][j] = h;
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= h * vi);
            }
            let wnorm = norm2(&w);
            hess[j + 1][j] = wnorm;
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let (hjj, hj1) = (hess[j][j], hess[j + 1][j]);
            let denom = hjj.hypot(hj1);
            if denom == 0.0 {
                k = j;
                break;
            }
            cs[j] = hjj / denom;
            sn[j] = hj1 / denom;
            hess[j][j] = denom;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            k = j + 1;
            let rel = g[j + 1].abs() / bnorm;
            history.push(rel);
            if wnorm <= 1e-14 * beta {
                happy = true;
                break;
            }
            if rel <= opts.tol || iters >= opts.max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / wnorm).collect());
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|l| hess[i][l] * y[l]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            x.iter_mut().zip(&basis[i]).for_each(|(xv, v)| *xv += yi * v);
        }
        let prev = beta;
        r = residual(&x, &mut tmp);
        beta = norm2(&r);
        if happy {
            status = if beta / bnorm <= opts.tol { GmresStatus::Converged } else { GmresStatus::HappyBreakdown };
            break;
        }
        if beta / bnorm > opts.tol && beta >= prev * (1.0 - 1e-12) && k == restart {
            status = GmresStatus::Stagnation;
            break;
        }
        if k == 0 {
            status = GmresStatus::Stagnation;
            break;
        }
    }
    let relres = beta / bnorm;
    let conv = status.converged() && relres.is_finite();
    (x, status, report(iters, relres, conv, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CsrMatrix, IdentityOperator, SparseLu};

    #[test]
    fn diagonal_spd_converges_within_dimension() {
        let d: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let a = CsrMatrix::diagonal(&d);
        let b = vec![1.0; 20];
        let opts = GmresOptions { restart: 50, tol: 1e-12, max_iter: 100 };
        let (x, status, rep) = gmres(&a, &b, None, &IdentityOperator(20), &opts);
        assert!(status.converged());
        assert!(rep.iterations <= 20);
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - 1.0 / (i + 1) as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_inverse_preconditioner_takes_one_iteration() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 3.0), (2, 2, 1.0), (2, 0, -1.0)]);
        let lu = SparseLu::factor(&a).unwrap();
        let (x, status, rep) = gmres(&a, &[1.0, 2.0, 3.0], None, &lu, &GmresOptions::default());
        assert!(status.converged());
        assert_eq!(rep.iterations, 1);
        let r = crate::linalg::relative_residual(&a, &x, &[1.0, 2.0, 3.0]);
        assert!(r < 1e-12);
    }

    #[test]
    fn residual_history_is_monotone_within_a_cycle() {
        let n = 60;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 2.0 + (i % 7) as f64));
            if i + 1 < n {
                trip.push((i, i + 1, -1.3));
                trip.push((i + 1, i, 0.4));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &trip);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let opts = GmresOptions { restart: 60, tol: 1e-12, max_iter: 200 };
        let (_, status, rep) = gmres(&a, &b, None, &IdentityOperator(n), &opts);
        assert!(status.converged());
        for w in rep.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = CsrMatrix::identity(4);
        let (x, status, _) = gmres(&a, &[0.0; 4], Some(&[1.0; 4]), &IdentityOperator(4), &GmresOptions::default());
        assert!(status.converged());
        assert_eq!(x, vec![0.0; 4]);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let d: Vec<f64> = (1..=50).map(|i| (i * i) as f64).collect();
        let a = CsrMatrix::diagonal(&d);
        let opts = GmresOptions { restart: 5, tol: 1e-14, max_iter: 7 };
        let (_, status, rep) = gmres(&a, &vec![1.0; 50], None, &IdentityOperator(50), &opts);
        assert!(!status.converged());
        assert!(rep.iterations <= 7);
        assert!(!rep.converged);
    }
}
