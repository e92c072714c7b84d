use super::{CsrMatrix, LinearOperator, SparseLu};

#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator(pub usize);

impl LinearOperator for IdentityOperator {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// One linearized splitting sweep on a `(u | q, p)` residual.
///
/// The flow block `[M_q, −B_qpᵀ; τ B_qp, L1 M_p]` is solved first with the
/// displacement coupling of the mass row dropped; the mechanics block
/// `A_e + L2 D` is then solved with the fresh pressure moved to the right.
#[derive(Debug, Clone)]
pub struct FixedStressPreconditioner {
    mechanics: SparseLu,
    flow: SparseLu,
    /// Mechanics rows, pressure columns of the monolithic matrix (`−α B_up`).
    coupling: CsrMatrix,
    n_u: usize,
    n_q: usize,
}

impl FixedStressPreconditioner {
    pub fn new(mechanics: SparseLu, flow: SparseLu, coupling: CsrMatrix, n_q: usize) -> Self {
        let n_u = mechanics.dim();
        assert_eq!(coupling.nrows(), n_u);
        assert_eq!(coupling.ncols() + n_q, flow.dim());
        FixedStressPreconditioner { mechanics, flow, coupling, n_u, n_q }
    }
}

impl LinearOperator for FixedStressPreconditioner {
    fn dim(&self) -> usize {
        self.n_u + self.flow.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (ru, rflow) = x.split_at(self.n_u);
        let (yu, yflow) = y.split_at_mut(self.n_u);
        self.flow.solve_into(rflow, yflow);
        let p = &yflow[self.n_q..];
        let mut rhs = ru.to_vec();
        self.coupling.mul_vec_add(-1.0, p, &mut rhs);
        self.mechanics.solve_into(&rhs, yu);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gmres, GmresOptions};

    fn spd(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    // n_u = 4, n_q = 2, n_p = 3
    fn pieces() -> (CsrMatrix, CsrMatrix, CsrMatrix) {
        let mech = spd(4, 0.5);
        let flow = CsrMatrix::from_triplets(
            5,
            5,
            &[(0, 0, 2.0), (1, 1, 3.0), (0, 2, -1.0), (1, 3, -1.0), (1, 4, 1.0), (2, 0, 0.5), (3, 1, 0.5), (4, 1, -0.5), (2, 2, 1.0), (3, 3, 1.0), (4, 4, 1.0)],
        );
        let coupling = CsrMatrix::from_triplets(4, 3, &[(0, 0, -0.7), (1, 1, 0.4), (3, 2, -0.2)]);
        (mech, flow, coupling)
    }

    fn precond() -> FixedStressPreconditioner {
        let (mech, flow, coupling) = pieces();
        FixedStressPreconditioner::new(SparseLu::factor(&mech).unwrap(), SparseLu::factor(&flow).unwrap(), coupling, 2)
    }

    #[test]
    fn linear_and_zero_preserving() {
        let pc = precond();
        let x: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37).sin()).collect();
        let z: Vec<f64> = (0..9).map(|i| (i as f64 * 1.3).cos()).collect();
        let mut px = vec![0.0; 9];
        let mut pz = vec![0.0; 9];
        let mut pxz = vec![0.0; 9];
        pc.apply(&x, &mut px);
        pc.apply(&z, &mut pz);
        let comb: Vec<f64> = x.iter().zip(&z).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        pc.apply(&comb, &mut pxz);
        for i in 0..9 {
            assert!((pxz[i] - (2.0 * px[i] - 3.0 * pz[i])).abs() < 1e-12);
        }
        let mut y = vec![1.0; 9];
        pc.apply(&[0.0; 9], &mut y);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_for_block_triangular_systems() {
        // with no displacement coupling in the mass row the sweep is an exact inverse
        let (mech, flow, coupling) = pieces();
        let a = CsrMatrix::from_blocks(9, 9, &[(0, 0, 1.0, &mech), (0, 6, 1.0, &coupling), (4, 4, 1.0, &flow)]);
        let b: Vec<f64> = (0..9).map(|i| 1.0 + i as f64).collect();
        let (x, status, rep) = gmres(&a, &b, None, &precond(), &GmresOptions::default());
        assert!(status.converged());
        assert!(rep.iterations <= 2, "{}", rep.iterations);
        let r = a.mul_vec(&x);
        assert!(r.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-8));
    }
}
