//! The two L-scheme iterations per backward-Euler step and the time loop.
//!
//! Both schemes keep the non-linear terms on the right-hand side and add
//! `L1⟨δp, w⟩` and `L2⟨div δu, div z⟩`, so every linear system they solve is
//! constant in time and iteration. [`SchemeContext`] assembles and factors
//! those systems once and reuses them for all steps.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_loads, assemble_nonlinear_rhs, build_constraints, BiotOperators, Constraints, Loads, Reduction,
};
use crate::error::{Error, Result};
use crate::fem::{p0_project, p1_interpolate, quadrature, rt0_interpolate, FeFunction, Space};
use crate::linalg::{
    gmres, norm2, relative_residual, CsrMatrix, FixedStressPreconditioner, GmresOptions, IdentityOperator, LinearOperator,
    SparseLu,
};
use crate::mesh::Mesh;
use crate::physics::{padded_range, LawConstants, MaterialModel, ProblemDefinition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Splitting,
    Monolithic,
}

impl SchemeKind {
    pub fn id(self) -> &'static str {
        match self {
            SchemeKind::Splitting => "splitting",
            SchemeKind::Monolithic => "monolithic",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "splitting" | "split" => Ok(SchemeKind::Splitting),
            "monolithic" | "mono" => Ok(SchemeKind::Monolithic),
            other => Err(Error::Input(format!("unknown scheme '{other}' (expected splitting or monolithic)"))),
        }
    }
}

/// How the linear systems inside an iteration are solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum LinearSolver {
    /// Cached sparse LU factors.
    Direct,
    /// Restarted GMRES; `preconditioned` selects the fixed-stress sweep for the
    /// monolithic system and exact block factors for the splitting blocks.
    Gmres { preconditioned: bool, options: GmresOptions },
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver::Direct
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub l1: f64,
    pub l2: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub divergence_factor: f64,
    pub linear: LinearSolver,
    /// Archive every iterate in the trace (needed for contraction checks).
    pub keep_iterates: bool,
}

/// Whether the stabilization satisfies the hypotheses of the convergence theorems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremFlags {
    pub splitting_safe: bool,
    pub monolithic_safe: bool,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind, l1: f64, l2: f64) -> Self {
        SchemeConfig {
            kind,
            l1,
            l2,
            tol: 1e-8,
            max_iter: 500,
            divergence_factor: 1e6,
            linear: LinearSolver::Direct,
            keep_iterates: false,
        }
    }

    /// `L1 = L_b`, `L2 = L_h + α²/b_m`.
    pub fn splitting_safe(kind: SchemeKind, c: &LawConstants, alpha: f64) -> Self {
        SchemeConfig::new(kind, c.l_b, c.l_h + alpha * alpha / c.b_m)
    }

    /// `L1 = L_b/2`, `L2 = L_h`.
    pub fn monolithic_safe(kind: SchemeKind, c: &LawConstants) -> Self {
        SchemeConfig::new(kind, 0.5 * c.l_b, c.l_h)
    }

    /// Theorem-safe parameters for the configured scheme kind.
    pub fn theorem_safe(kind: SchemeKind, c: &LawConstants, alpha: f64) -> Self {
        match kind {
            SchemeKind::Splitting => SchemeConfig::splitting_safe(kind, c, alpha),
            SchemeKind::Monolithic => SchemeConfig::monolithic_safe(kind, c),
        }
    }

    /// Undrained-split parameters of linear Biot: `L1 = 1/M`, `L2 = λ + Mα²`.
    pub fn undrained_split(kind: SchemeKind, inv_m: f64, lambda: f64, alpha: f64) -> Self {
        SchemeConfig::new(kind, inv_m, lambda + alpha * alpha / inv_m)
    }

    /// `L2 = λ + Mα²/2` for linear Biot (exposed as a preset only).
    pub fn optimal_linear(kind: SchemeKind, inv_m: f64, lambda: f64, alpha: f64) -> Self {
        SchemeConfig::new(kind, inv_m, lambda + 0.5 * alpha * alpha / inv_m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l1 >= 0.0) || !self.l1.is_finite() || !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(Error::Config(format!("L1, L2 must be finite and non-negative (got {}, {})", self.l1, self.l2)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::Config("divergence factor must exceed 1".into()));
        }
        Ok(())
    }

    pub fn theorem_flags(&self, c: &LawConstants, alpha: f64) -> TheoremFlags {
        let split_l2 = if c.b_m > 0.0 { c.l_h + alpha * alpha / c.b_m } else if alpha == 0.0 { c.l_h } else { f64::INFINITY };
        TheoremFlags {
            splitting_safe: c.b_m > 0.0 && self.l1 >= c.l_b && self.l2 >= split_l2,
            monolithic_safe: self.l1 >= 0.5 * c.l_b && self.l2 >= c.l_h,
        }
    }
}

/// Discrete fields at one time level (full-space coefficients).
#[derive(Debug, Clone, PartialEq)]
pub struct BiotState {
    pub u: FeFunction,
    pub q: FeFunction,
    pub p: FeFunction,
    pub time: f64,
}

impl BiotState {
    pub fn zeros(mesh: &Mesh, time: f64) -> Self {
        BiotState {
            u: FeFunction::zeros(mesh, Space::P1Vector),
            q: FeFunction::zeros(mesh, Space::Rt0),
            p: FeFunction::zeros(mesh, Space::P0),
            time,
        }
    }

    /// Interpolated initial data of a problem.
    pub fn initial(mesh: &Mesh, problem: &ProblemDefinition) -> Result<Self> {
        let rule = quadrature(4)?;
        Ok(BiotState {
            u: p1_interpolate(mesh, |x| (problem.u0)(x, 0.0)),
            q: rt0_interpolate(mesh, |x| (problem.q0)(x, 0.0)),
            p: p0_project(mesh, &rule, |x| (problem.p0)(x, 0.0)),
            time: 0.0,
        })
    }

    /// Cellwise pressure and divergence ranges.
    pub fn ranges(&self, ops: &BiotOperators) -> ((f64, f64), (f64, f64)) {
        let minmax = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        (minmax(&self.p.coeffs), minmax(&ops.cell_divergence(&self.u.coeffs)))
    }
}

/// Mass-weighted L² norms `(‖p‖, ‖q‖, ‖u‖)`.
pub fn field_norms(ops: &BiotOperators, u: &[f64], q: &[f64], p: &[f64]) -> (f64, f64, f64) {
    let n = |m: &CsrMatrix, v: &[f64]| m.bilinear(v, v).max(0.0).sqrt();
    (n(&ops.m_p, p), n(&ops.mass_q, q), n(&ops.mass_u, u))
}

/// Linear-solver statistics of one iteration (summed over its systems).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearStats {
    pub label: String,
    pub iterations: usize,
    pub relres: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub dp: f64,
    pub dq: f64,
    pub du: f64,
    pub sum: f64,
    /// `sum_i / sum_{i−1}`, defined from the second iteration on.
    pub rate: Option<f64>,
    pub linear: LinearStats,
}

#[derive(Debug, Clone, Default)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// Iterates `0..=n` when archiving is enabled (index 0 is the seed).
    pub iterates: Vec<BiotState>,
    /// Cells evaluated outside the laws' certified ranges, summed over iterations.
    pub out_of_range: usize,
    /// Constants over the padded range of the previous state and the resulting flags.
    pub constants: Option<LawConstants>,
    pub flags: Option<TheoremFlags>,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn linear_iterations(&self) -> usize {
        self.records.iter().map(|r| r.linear.iterations).sum()
    }
}

enum Solve {
    Lu(SparseLu),
    Krylov { matrix: CsrMatrix, precond: Box<dyn LinearOperator + Send + Sync>, options: GmresOptions, label: &'static str },
}

impl Solve {
    fn run(&self, matrix: &CsrMatrix, rhs: &[f64], guess: &[f64], what: &str) -> Result<(Vec<f64>, LinearStats)> {
        let start = Instant::now();
        match self {
            Solve::Lu(lu) => {
                let x = lu.solve(rhs);
                let relres = relative_residual(matrix, &x, rhs);
                Ok((x, LinearStats { label: "lu".into(), iterations: 1, relres, seconds: start.elapsed().as_secs_f64() }))
            }
            Solve::Krylov { matrix, precond, options, label } => {
                let (x, status, rep) = gmres(matrix, rhs, Some(guess), precond.as_ref(), options);
                if !status.converged() {
                    return Err(Error::LinearSolve(format!(
                        "GMRES on the {what} system stopped with {status:?} after {} iterations (relative residual {:.3e})",
                        rep.iterations, rep.relative_residual
                    )));
                }
                Ok((
                    x,
                    LinearStats {
                        label: (*label).into(),
                        iterations: rep.iterations,
                        relres: rep.relative_residual,
                        seconds: start.elapsed().as_secs_f64(),
                    },
                ))
            }
        }
    }
}

struct ReducedBlock {
    full: CsrMatrix,
    reduced: CsrMatrix,
    solve: Solve,
}

enum Backend {
    Monolithic(ReducedBlock),
    Splitting { flow: ReducedBlock, mech: ReducedBlock },
}

/// Everything needed to iterate one problem with one configuration.
pub struct SchemeContext<'a> {
    pub mesh: &'a Mesh,
    pub ops: &'a BiotOperators,
    pub mat: &'a MaterialModel,
    pub problem: &'a ProblemDefinition,
    pub cfg: SchemeConfig,
    pub tau: f64,
    structure: Constraints,
    backend: Backend,
}

/// Full-space monolithic matrix with unknown order `(u, q, p)`.
pub fn monolithic_matrix(ops: &BiotOperators, alpha: f64, l1: f64, l2: f64, tau: f64) -> CsrMatrix {
    let (nu, nq, np) = (ops.n_u(), ops.n_q(), ops.n_p());
    let mech = ops.a_e.add_scaled(l2, &ops.d);
    let b_qp_t = ops.b_qp.transpose();
    let b_up_t = ops.b_up.transpose();
    CsrMatrix::from_blocks(
        nu + nq + np,
        nu + nq + np,
        &[
            (0, 0, 1.0, &mech),
            (0, nu + nq, -alpha, &ops.b_up),
            (nu, nu, 1.0, &ops.m_q),
            (nu, nu + nq, -1.0, &b_qp_t),
            (nu + nq, 0, alpha, &b_up_t),
            (nu + nq, nu, tau, &ops.b_qp),
            (nu + nq, nu + nq, l1, &ops.m_p),
        ],
    )
}

/// Full-space flow block `[M_q, −B_qpᵀ; τB_qp, L1·M_p]`.
pub fn flow_matrix(ops: &BiotOperators, l1: f64, tau: f64) -> CsrMatrix {
    let (nq, np) = (ops.n_q(), ops.n_p());
    let b_qp_t = ops.b_qp.transpose();
    CsrMatrix::from_blocks(
        nq + np,
        nq + np,
        &[(0, 0, 1.0, &ops.m_q), (0, nq, -1.0, &b_qp_t), (nq, 0, tau, &ops.b_qp), (nq, nq, l1, &ops.m_p)],
    )
}

/// Full-space mechanics block `A_e + L2·D`.
pub fn mechanics_matrix(ops: &BiotOperators, l2: f64) -> CsrMatrix {
    ops.a_e.add_scaled(l2, &ops.d)
}

/// One linearized splitting sweep on reduced `(u | q, p)` residuals, built
/// with stabilization `(l1, l2)`.
pub fn fixed_stress_preconditioner(
    ops: &BiotOperators,
    constraints: &Constraints,
    alpha: f64,
    l1: f64,
    l2: f64,
    tau: f64,
) -> Result<FixedStressPreconditioner> {
    let mech = Reduction::reduce_matrix(&mechanics_matrix(ops, l2), &constraints.u, &constraints.u);
    let flow_red = Reduction::concat(&[&constraints.q, &constraints.p]);
    let flow = Reduction::reduce_matrix(&flow_matrix(ops, l1, tau), &flow_red, &flow_red);
    let coupling = Reduction::reduce_matrix(&ops.b_up.scaled(-alpha), &constraints.u, &constraints.p);
    Ok(FixedStressPreconditioner::new(
        SparseLu::factor(&mech)?,
        SparseLu::factor(&flow)?,
        coupling,
        constraints.q.n_reduced(),
    ))
}

impl<'a> SchemeContext<'a> {
    pub fn new(
        mesh: &'a Mesh,
        ops: &'a BiotOperators,
        mat: &'a MaterialModel,
        problem: &'a ProblemDefinition,
        cfg: SchemeConfig,
        tau: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {tau}")));
        }
        let structure = build_constraints(mesh, problem, 0.0)?;
        let alpha = mat.alpha;
        let backend = match cfg.kind {
            SchemeKind::Monolithic => {
                let full = monolithic_matrix(ops, alpha, cfg.l1, cfg.l2, tau);
                let red = structure.combined();
                let reduced = Reduction::reduce_matrix(&full, &red, &red);
                let solve = match cfg.linear {
                    LinearSolver::Direct => Solve::Lu(SparseLu::factor(&reduced)?),
                    LinearSolver::Gmres { preconditioned, options } => {
                        let precond: Box<dyn LinearOperator + Send + Sync> = if preconditioned {
                            Box::new(fixed_stress_preconditioner(ops, &structure, alpha, cfg.l1, cfg.l2, tau)?)
                        } else {
                            Box::new(IdentityOperator(reduced.nrows()))
                        };
                        let label = if preconditioned { "gmres-fs" } else { "gmres" };
                        Solve::Krylov { matrix: reduced.clone(), precond, options, label }
                    }
                };
                Backend::Monolithic(ReducedBlock { full, reduced, solve })
            }
            SchemeKind::Splitting => {
                let flow_full = flow_matrix(ops, cfg.l1, tau);
                let flow_red = Reduction::concat(&[&structure.q, &structure.p]);
                let flow_reduced = Reduction::reduce_matrix(&flow_full, &flow_red, &flow_red);
                let mech_full = mechanics_matrix(ops, cfg.l2);
                let mech_reduced = Reduction::reduce_matrix(&mech_full, &structure.u, &structure.u);
                let make = |m: &CsrMatrix| -> Result<Solve> {
                    Ok(match cfg.linear {
                        LinearSolver::Direct => Solve::Lu(SparseLu::factor(m)?),
                        LinearSolver::Gmres { preconditioned, options } => {
                            let precond: Box<dyn LinearOperator + Send + Sync> = if preconditioned {
                                Box::new(SparseLu::factor(m)?)
                            } else {
                                Box::new(IdentityOperator(m.nrows()))
                            };
                            let label = if preconditioned { "gmres-lu" } else { "gmres" };
                            Solve::Krylov { matrix: m.clone(), precond, options, label }
                        }
                    })
                };
                Backend::Splitting {
                    flow: ReducedBlock { solve: make(&flow_reduced)?, full: flow_full, reduced: flow_reduced },
                    mech: ReducedBlock { solve: make(&mech_reduced)?, full: mech_full, reduced: mech_reduced },
                }
            }
        };
        Ok(SchemeContext { mesh, ops, mat, problem, cfg, tau, structure, backend })
    }

    /// Constraint layout shared by all time levels.
    pub fn constraints(&self) -> &Constraints {
        &self.structure
    }

    fn constraints_at(&self, t: f64) -> Result<Constraints> {
        let c = build_constraints(self.mesh, self.problem, t)?;
        let same = |a: &Reduction, b: &Reduction| {
            a.n_full() == b.n_full() && (0..a.n_full()).all(|i| a.reduced_index(i) == b.reduced_index(i))
        };
        if !same(&c.u, &self.structure.u) || !same(&c.q, &self.structure.q) {
            return Err(Error::Config(format!("constraint layout changes at t = {t}")));
        }
        Ok(c)
    }

    /// Per-step data that does not change across iterations.
    pub fn prepare_step(&self, prev: &BiotState, t: f64) -> Result<StepData> {
        let constraints = self.constraints_at(t)?;
        let loads = assemble_loads(self.mesh, self.mat, self.problem, t)?;
        let nl = assemble_nonlinear_rhs(self.ops, self.mat, &prev.p.coeffs, &prev.u.coeffs);
        // b(p^{n−1}) + α div u^{n−1} tested against P0
        let mut mass_prev = nl.bp;
        self.ops.b_up.transpose().mul_vec_add(self.mat.alpha, &prev.u.coeffs, &mut mass_prev);
        Ok(StepData { t, constraints, loads, mass_prev })
    }

    /// One iteration of the configured scheme.
    pub fn iterate(&self, step: &StepData, cur: &BiotState) -> Result<(BiotState, LinearStats, usize)> {
        match self.cfg.kind {
            SchemeKind::Monolithic => self.monolithic_iteration(step, cur),
            SchemeKind::Splitting => self.splitting_iteration(step, cur),
        }
    }

    fn mass_rhs(&self, step: &StepData, cur: &BiotState, bp: &[f64]) -> Vec<f64> {
        let ops = self.ops;
        let mp_p = ops.m_p.mul_vec(&cur.p.coeffs);
        (0..ops.n_p())
            .map(|c| self.tau * step.loads.s[c] + step.mass_prev[c] - bp[c] + self.cfg.l1 * mp_p[c])
            .collect()
    }

    fn mechanics_rhs(&self, step: &StepData, cur: &BiotState, hu: &[f64]) -> Vec<f64> {
        let d_u = self.ops.d.mul_vec(&cur.u.coeffs);
        (0..self.ops.n_u()).map(|i| step.loads.f[i] + self.cfg.l2 * d_u[i] - hu[i]).collect()
    }

    /// Monolithic L-scheme: one coupled `(u, q, p)` solve.
    pub fn monolithic_iteration(&self, step: &StepData, cur: &BiotState) -> Result<(BiotState, LinearStats, usize)> {
        let Backend::Monolithic(block) = &self.backend else {
            return Err(Error::Config("context was built for the splitting scheme".into()));
        };
        let nl = assemble_nonlinear_rhs(self.ops, self.mat, &cur.p.coeffs, &cur.u.coeffs);
        let mut rhs = self.mechanics_rhs(step, cur, &nl.hu);
        rhs.extend_from_slice(&step.loads.g);
        rhs.extend(self.mass_rhs(step, cur, &nl.bp));
        let red = step.constraints.combined();
        let (_, rhs_red) = lift_only(&block.full, &rhs, &red);
        let guess = red.gather(&concat3(&cur.u.coeffs, &cur.q.coeffs, &cur.p.coeffs));
        let (x, stats) = block.solve.run(&block.reduced, &rhs_red, &guess, "monolithic")?;
        let full = red.expand(&x);
        let (nu, nq) = (self.ops.n_u(), self.ops.n_q());
        let next = BiotState {
            u: FeFunction { space: Space::P1Vector, coeffs: full[..nu].to_vec() },
            q: FeFunction { space: Space::Rt0, coeffs: full[nu..nu + nq].to_vec() },
            p: FeFunction { space: Space::P0, coeffs: full[nu + nq..].to_vec() },
            time: step.t,
        };
        Ok((next, stats, nl.out_of_range))
    }

    /// Splitting L-scheme: flow solve with the lagged displacement, then
    /// mechanics with the new pressure.
    pub fn splitting_iteration(&self, step: &StepData, cur: &BiotState) -> Result<(BiotState, LinearStats, usize)> {
        let Backend::Splitting { flow, mech } = &self.backend else {
            return Err(Error::Config("context was built for the monolithic scheme".into()));
        };
        let ops = self.ops;
        let alpha = self.mat.alpha;
        let nl = assemble_nonlinear_rhs(ops, self.mat, &cur.p.coeffs, &cur.u.coeffs);

        let mut mass = self.mass_rhs(step, cur, &nl.bp);
        ops.b_up.transpose().mul_vec_add(-alpha, &cur.u.coeffs, &mut mass);
        let mut rhs = step.loads.g.clone();
        rhs.extend(mass);
        let flow_red = Reduction::concat(&[&step.constraints.q, &step.constraints.p]);
        let (_, rhs_red) = lift_only(&flow.full, &rhs, &flow_red);
        let guess = flow_red.gather(&[cur.q.coeffs.as_slice(), cur.p.coeffs.as_slice()].concat());
        let (x, s1) = flow.solve.run(&flow.reduced, &rhs_red, &guess, "flow")?;
        let qp = flow_red.expand(&x);
        let nq = ops.n_q();
        let q = qp[..nq].to_vec();
        let p = qp[nq..].to_vec();

        let mut rhs = self.mechanics_rhs(step, cur, &nl.hu);
        ops.b_up.mul_vec_add(alpha, &p, &mut rhs);
        let (_, rhs_red) = lift_only(&mech.full, &rhs, &step.constraints.u);
        let guess = step.constraints.u.gather(&cur.u.coeffs);
        let (x, s2) = mech.solve.run(&mech.reduced, &rhs_red, &guess, "mechanics")?;
        let u = step.constraints.u.expand(&x);

        let stats = LinearStats {
            label: format!("{}+{}", s1.label, s2.label),
            iterations: s1.iterations + s2.iterations,
            relres: s1.relres.max(s2.relres),
            seconds: s1.seconds + s2.seconds,
        };
        let next = BiotState {
            u: FeFunction { space: Space::P1Vector, coeffs: u },
            q: FeFunction { space: Space::Rt0, coeffs: q },
            p: FeFunction { space: Space::P0, coeffs: p },
            time: step.t,
        };
        Ok((next, stats, nl.out_of_range))
    }

    /// Iterates one time step from the previous converged state.
    pub fn iterate_to_convergence(&self, prev: &BiotState, t: f64) -> Result<(BiotState, IterationTrace)> {
        let step = self.prepare_step(prev, t)?;
        let mut trace = IterationTrace::default();
        let mut cur = BiotState { time: t, ..prev.clone() };
        if self.cfg.keep_iterates {
            trace.iterates.push(cur.clone());
        }
        let mut first_sum = None;
        for i in 1..=self.cfg.max_iter {
            let (next, linear, oor) = self.iterate(&step, &cur)?;
            trace.out_of_range += oor;
            let du: Vec<f64> = next.u.coeffs.iter().zip(&cur.u.coeffs).map(|(a, b)| a - b).collect();
            let dq: Vec<f64> = next.q.coeffs.iter().zip(&cur.q.coeffs).map(|(a, b)| a - b).collect();
            let dp: Vec<f64> = next.p.coeffs.iter().zip(&cur.p.coeffs).map(|(a, b)| a - b).collect();
            let (np, nq, nu) = field_norms(self.ops, &du, &dq, &dp);
            let sum = np + nq + nu;
            let rate = trace.records.last().map(|r: &IterationRecord| if r.sum > 0.0 { sum / r.sum } else { f64::NAN });
            trace.records.push(IterationRecord { iter: i, dp: np, dq: nq, du: nu, sum, rate, linear });
            cur = next;
            if self.cfg.keep_iterates {
                trace.iterates.push(cur.clone());
            }
            if !sum.is_finite() {
                return Err(Error::Divergence { iteration: i, reason: "non-finite increment".into() });
            }
            let first = *first_sum.get_or_insert(sum);
            if sum <= self.cfg.tol {
                trace.converged = true;
                break;
            }
            if sum > self.cfg.divergence_factor * first {
                return Err(Error::Divergence {
                    iteration: i,
                    reason: format!("increment {sum:.3e} exceeds {:.0e} x first increment {first:.3e}", self.cfg.divergence_factor),
                });
            }
        }
        Ok((cur, trace))
    }

    /// Backward-Euler time loop over `n_steps` steps of size `tau` from `initial`.
    pub fn time_march(&self, initial: &BiotState, n_steps: usize) -> Result<Vec<(BiotState, IterationTrace)>> {
        let mut out: Vec<(BiotState, IterationTrace)> = Vec::with_capacity(n_steps);
        for n in 1..=n_steps {
            let prev = out.last().map_or(initial, |s| &s.0);
            let t = initial.time + n as f64 * self.tau;
            let wrap = |e: Error| Error::Step { step: n, source: Box::new(e) };
            let (p_rng, s_rng) = prev.ranges(self.ops);
            let constants = self.mat.constants_on(padded_range(p_rng.0, p_rng.1, 0.2), padded_range(s_rng.0, s_rng.1, 0.2)).ok();
            let (state, mut trace) = self.iterate_to_convergence(prev, t).map_err(wrap)?;
            trace.flags = constants.map(|c| self.cfg.theorem_flags(&c, self.mat.alpha));
            trace.constants = constants;
            out.push((state, trace));
        }
        Ok(out)
    }

    /// Residual norms `(mechanics, darcy, mass)` of the non-linear discrete
    /// equations at `state`, reduced to the free unknowns.
    pub fn nonlinear_residual(&self, prev: &BiotState, state: &BiotState) -> Result<[f64; 3]> {
        let step = self.prepare_step(prev, state.time)?;
        Ok(nonlinear_residual(self.ops, self.mat, self.tau, &step, state))
    }
}

/// Data fixed during one time step.
#[derive(Debug, Clone)]
pub struct StepData {
    pub t: f64,
    pub constraints: Constraints,
    pub loads: Loads,
    /// `⟨b(p^{n−1}) + α div u^{n−1}, w⟩`
    pub mass_prev: Vec<f64>,
}

fn lift_only(full: &CsrMatrix, rhs: &[f64], red: &Reduction) -> ((), Vec<f64>) {
    let lift = full.mul_vec(red.fixed_values());
    let shifted: Vec<f64> = rhs.iter().zip(&lift).map(|(b, l)| b - l).collect();
    ((), red.restrict(&shifted))
}

fn concat3(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len() + c.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v.extend_from_slice(c);
    v
}

/// Residuals of the discrete non-linear equations (no stabilization terms).
pub fn nonlinear_residual(ops: &BiotOperators, mat: &MaterialModel, tau: f64, step: &StepData, state: &BiotState) -> [f64; 3] {
    let (u, q, p) = (&state.u.coeffs, &state.q.coeffs, &state.p.coeffs);
    let nl = assemble_nonlinear_rhs(ops, mat, p, u);
    let mut ru = ops.a_e.mul_vec(u);
    ops.b_up.mul_vec_add(-mat.alpha, p, &mut ru);
    for i in 0..ru.len() {
        ru[i] += nl.hu[i] - step.loads.f[i];
    }
    let mut rq = ops.m_q.mul_vec(q);
    let bt_p = ops.b_qp.mul_transpose_vec(p);
    for i in 0..rq.len() {
        rq[i] -= bt_p[i] + step.loads.g[i];
    }
    let mut rp = ops.b_up.mul_transpose_vec(u);
    rp.iter_mut().for_each(|v| *v *= mat.alpha);
    ops.b_qp.mul_vec_add(tau, q, &mut rp);
    for c in 0..rp.len() {
        rp[c] += nl.bp[c] - tau * step.loads.s[c] - step.mass_prev[c];
    }
    let c = &step.constraints;
    [norm2(&c.u.restrict(&ru)), norm2(&c.q.restrict(&rq)), norm2(&c.p.restrict(&rp))]
}

/// Writes trace rows `step,iter,dp,dq,du,sum,rate,linsys,iters,relres,seconds`;
/// timings are written as zero when `deterministic` is set.
pub fn write_trace_csv<W: Write>(out: W, traces: &[(usize, &IterationTrace)], deterministic: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "iter", "dp", "dq", "du", "sum", "rate", "linsys", "iters", "relres", "seconds"])?;
    for (step, trace) in traces {
        for r in &trace.records {
            let secs = if deterministic { 0.0 } else { r.linear.seconds };
            w.write_record([
                step.to_string(),
                r.iter.to_string(),
                format!("{:.6e}", r.dp),
                format!("{:.6e}", r.dq),
                format!("{:.6e}", r.du),
                format!("{:.6e}", r.sum),
                r.rate.map_or(String::new(), |v| format!("{v:.6e}")),
                r.linear.label.clone(),
                r.linear.iterations.to_string(),
                format!("{:.3e}", r.linear.relres),
                format!("{secs:.6}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_rect_mesh;
    use crate::physics::{manufactured_problem, LawCase};

    fn setup(h: usize) -> (Mesh, MaterialModel, ProblemDefinition) {
        let mesh = generate_rect_mesh([0.0, 0.0], [1.0, 1.0], h, h).unwrap();
        let mat = MaterialModel::manufactured(LawCase::Linear).unwrap();
        let prob = manufactured_problem(&mat).unwrap();
        (mesh, mat, prob)
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let (mesh, mat, mut prob) = setup(4);
        prob.zero_loads = true;
        let ops = BiotOperators::assemble(&mesh, &mat).unwrap();
        for kind in [SchemeKind::Splitting, SchemeKind::Monolithic] {
            let ctx = SchemeContext::new(&mesh, &ops, &mat, &prob, SchemeConfig::new(kind, 1.0, 2.0), 0.25).unwrap();
            let prev = BiotState::zeros(&mesh, 0.0);
            let (state, trace) = ctx.iterate_to_convergence(&prev, 0.25).unwrap();
            assert_eq!(trace.iterations(), 1);
            assert!(trace.converged);
            assert!(state.p.coeffs.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn flags_follow_theorem_conditions() {
        let c = LawConstants { b_m: 0.5, l_b: 2.0, h_m: 0.0, l_h: 3.0 };
        let cfg = SchemeConfig::splitting_safe(SchemeKind::Splitting, &c, 1.0);
        assert_eq!(cfg.l2, 5.0);
        assert!(cfg.theorem_flags(&c, 1.0).splitting_safe);
        let cfg = SchemeConfig::monolithic_safe(SchemeKind::Monolithic, &c);
        let f = cfg.theorem_flags(&c, 1.0);
        assert!(f.monolithic_safe && !f.splitting_safe);
        assert!(SchemeConfig::new(SchemeKind::Monolithic, -1.0, 0.0).validate().is_err());
    }

    #[test]
    fn schemes_agree_on_linear_problem() {
        let (mesh, mat, prob) = setup(4);
        let ops = BiotOperators::assemble(&mesh, &mat).unwrap();
        let prev = BiotState::zeros(&mesh, 0.0);
        let split = SchemeContext::new(&mesh, &ops, &mat, &prob, SchemeConfig::undrained_split(SchemeKind::Splitting, 1.0, 1.0, 1.0), 0.25)
            .unwrap();
        let mono = SchemeContext::new(&mesh, &ops, &mat, &prob, SchemeConfig::new(SchemeKind::Monolithic, 0.5, 1.0), 0.25).unwrap();
        let (a, ta) = split.iterate_to_convergence(&prev, 0.25).unwrap();
        let (b, tb) = mono.iterate_to_convergence(&prev, 0.25).unwrap();
        assert!(ta.converged && tb.converged);
        let d: Vec<f64> = a.p.coeffs.iter().zip(&b.p.coeffs).map(|(x, y)| x - y).collect();
        assert!(norm2(&d) < 1e-7);
        let r = mono.nonlinear_residual(&prev, &b).unwrap();
        assert!(r.iter().all(|v| *v < 1e-8), "{r:?}");
    }
}
