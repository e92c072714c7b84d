//! Measurements: errors against exact solutions, (L1, L2) sweeps, sensitivity
//! grids, contraction checks, Mandel time series and GMRES robustness.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{build_constraints, BiotOperators, Reduction};
use crate::error::{Error, Result};
use crate::fem::{quadrature, FeFunction};
use crate::linalg::{gmres, GmresOptions, IdentityOperator};
use crate::mesh::{generate_rect_mesh, Mesh, Side};
use crate::physics::{
    manufactured_problem, mandel_problem, padded_range, ExactSolution, LawCase, LawConstants, MandelConfig, MaterialModel,
    ProblemDefinition,
};
use crate::schemes::{
    fixed_stress_preconditioner, monolithic_matrix, BiotState, IterationTrace, SchemeConfig, SchemeContext, SchemeKind,
};

/// A benchmark problem with everything needed to build it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "lowercase")]
pub enum ProblemSpec {
    /// Unit square with the bubble solution; `n` cells per side.
    Manufactured { case: LawCase, n: usize, tau: f64, final_time: f64, permeability: f64, alpha: f64 },
    Mandel { case: LawCase, config: MandelConfig },
}

impl ProblemSpec {
    pub fn manufactured(case: LawCase, n: usize, tau: f64) -> Self {
        ProblemSpec::Manufactured { case, n, tau, final_time: 1.0, permeability: 1.0, alpha: 1.0 }
    }

    pub fn case(&self) -> LawCase {
        match self {
            ProblemSpec::Manufactured { case, .. } | ProblemSpec::Mandel { case, .. } => *case,
        }
    }

    pub fn tau(&self) -> f64 {
        match self {
            ProblemSpec::Manufactured { tau, .. } => *tau,
            ProblemSpec::Mandel { config, .. } => config.dt,
        }
    }

    /// Copy with one sensitivity axis changed.
    pub fn with_axis(&self, axis: Axis, value: f64) -> Result<Self> {
        let mut s = self.clone();
        match (&mut s, axis) {
            (ProblemSpec::Manufactured { n, .. }, Axis::H) => *n = cells_per_side(value, 1.0)?,
            (ProblemSpec::Manufactured { tau, .. }, Axis::Tau) => *tau = value,
            (ProblemSpec::Manufactured { permeability, .. }, Axis::K) => *permeability = value,
            (ProblemSpec::Manufactured { alpha, .. }, Axis::Alpha) => *alpha = value,
            (ProblemSpec::Mandel { config, .. }, Axis::H) => {
                config.nx = cells_per_side(value, config.a)?;
                config.ny = cells_per_side(value, config.b)?;
            }
            (ProblemSpec::Mandel { config, .. }, Axis::Tau) => config.dt = value,
            (ProblemSpec::Mandel { config, .. }, Axis::K) => config.permeability = value,
            (ProblemSpec::Mandel { config, .. }, Axis::Alpha) => config.alpha = value,
        }
        Ok(s)
    }

    pub fn build(&self) -> Result<Setup> {
        let (mesh, mat, problem, tau, steps) = match self {
            ProblemSpec::Manufactured { case, n, tau, final_time, permeability, alpha } => {
                if *case != LawCase::Linear && !LawCase::MANUFACTURED.contains(case) {
                    return Err(Error::Config(format!("law case {case} is not a manufactured case")));
                }
                let steps = step_count(*final_time, *tau)?;
                let mesh = generate_rect_mesh([0.0, 0.0], [1.0, 1.0], *n, *n)?;
                let mat = MaterialModel::manufactured(*case)?.with_permeability(*permeability)?.with_alpha(*alpha);
                let problem = manufactured_problem(&mat)?;
                (mesh, mat, problem, *tau, steps)
            }
            ProblemSpec::Mandel { case, config } => {
                config.validate()?;
                let mesh = generate_rect_mesh([0.0, 0.0], [config.a, config.b], config.nx, config.ny)?;
                let mat = config.material(*case)?;
                let problem = mandel_problem(&mat, config)?;
                (mesh, mat, problem, config.dt, config.steps())
            }
        };
        let ops = BiotOperators::assemble(&mesh, &mat)?;
        let initial = BiotState::initial(&mesh, &problem)?;
        Ok(Setup { mesh, mat, problem, ops, tau, steps, initial })
    }
}

/// Number of cells of width `h` along a side of `length`; `h` must divide it.
pub fn cells_per_side(h: f64, length: f64) -> Result<usize> {
    let n = (length / h).round();
    if !(h > 0.0) || n < 1.0 || ((length / h) - n).abs() > 1e-9 * n {
        return Err(Error::Config(format!("mesh size {h} does not divide the side length {length}")));
    }
    Ok(n as usize)
}

fn step_count(final_time: f64, tau: f64) -> Result<usize> {
    let n = (final_time / tau).round();
    if !(tau > 0.0) || n < 1.0 || ((final_time / tau) - n).abs() > 1e-9 * n {
        return Err(Error::Config(format!("time step {tau} does not divide the final time {final_time}")));
    }
    Ok(n as usize)
}

/// A built problem: mesh, material, operators and initial state.
pub struct Setup {
    pub mesh: Mesh,
    pub mat: MaterialModel,
    pub problem: ProblemDefinition,
    pub ops: BiotOperators,
    pub tau: f64,
    pub steps: usize,
    pub initial: BiotState,
}

/// How the stabilization parameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LChoice {
    Fixed { l1: f64, l2: f64 },
    /// Theorem conditions with equality for the scheme kind.
    TheoremSafe,
    /// `L1 = f1·L_b`, `L2 = f2·L_h`.
    Scaled { f1: f64, f2: f64 },
    /// Linear laws only: `L1 = 1/M`, `L2 = λ + Mα²`.
    Undrained,
    /// Linear laws only: `L1 = 1/M`, `L2 = λ + Mα²/2`.
    Optimal,
}

impl LChoice {
    pub fn needs_constants(&self) -> bool {
        matches!(self, LChoice::TheoremSafe | LChoice::Scaled { .. })
    }

    pub fn resolve(&self, kind: SchemeKind, mat: &MaterialModel, c: Option<&LawConstants>) -> Result<(f64, f64)> {
        let need = || c.ok_or_else(|| Error::Config("law constants are required for this L rule".into()));
        let linear = || match (mat.b_law.linear_slope(), mat.h_law.linear_slope()) {
            (Some(b), Some(h)) if b > 0.0 => Ok((b, h)),
            _ => Err(Error::Config("undrained and optimal presets need linear laws with b' > 0".into())),
        };
        let (l1, l2) = match *self {
            LChoice::Fixed { l1, l2 } => (l1, l2),
            LChoice::TheoremSafe => {
                let cfg = SchemeConfig::theorem_safe(kind, need()?, mat.alpha);
                (cfg.l1, cfg.l2)
            }
            LChoice::Scaled { f1, f2 } => {
                let c = need()?;
                (f1 * c.l_b, f2 * c.l_h)
            }
            LChoice::Undrained => {
                let (b, h) = linear()?;
                let cfg = SchemeConfig::undrained_split(kind, b, h, mat.alpha);
                (cfg.l1, cfg.l2)
            }
            LChoice::Optimal => {
                let (b, h) = linear()?;
                let cfg = SchemeConfig::optimal_linear(kind, b, h, mat.alpha);
                (cfg.l1, cfg.l2)
            }
        };
        if !l1.is_finite() || !l2.is_finite() {
            return Err(Error::Config(format!("L rule {self:?} gives non-finite parameters ({l1}, {l2})")));
        }
        Ok((l1, l2))
    }
}

impl Setup {
    pub fn context(&self, cfg: SchemeConfig) -> Result<SchemeContext<'_>> {
        SchemeContext::new(&self.mesh, &self.ops, &self.mat, &self.problem, cfg, self.tau)
    }

    /// Solves the step from `prev` with the monolithic iteration. `L2` is the
    /// bound `L_h` over the law's admissible interval; `L1` starts at `L_b`
    /// there (or `b_m` when that is unbounded) and is raised tenfold until the
    /// iteration converges.
    pub fn pilot_solve(&self, prev: &BiotState, t: f64) -> Result<BiotState> {
        let c = self.mat.constants;
        let mut l1 = if c.l_b.is_finite() && c.l_b > 0.0 { c.l_b } else if c.b_m > 0.0 { c.b_m } else { 1.0 };
        let l2 = if c.l_h.is_finite() { c.l_h } else { 1.0 };
        let mut last = None;
        for _ in 0..6 {
            let mut cfg = SchemeConfig::new(SchemeKind::Monolithic, l1, l2);
            cfg.max_iter = 20_000;
            match self.context(cfg)?.iterate_to_convergence(prev, t) {
                Ok((state, trace)) if trace.converged => return Ok(state),
                Ok(_) => last = Some(Error::Divergence { iteration: cfg.max_iter, reason: "pilot did not converge".into() }),
                Err(e @ Error::Divergence { .. }) => last = Some(e),
                Err(e) => return Err(e),
            }
            l1 *= 10.0;
        }
        Err(last.unwrap_or_else(|| Error::Divergence { iteration: 0, reason: "pilot failed".into() }))
    }

    /// Law constants over the padded range of `state`.
    pub fn constants_around(&self, state: &BiotState) -> Result<LawConstants> {
        let (p, s) = state.ranges(&self.ops);
        self.mat.constants_on(padded_range(p.0, p.1, 0.2), padded_range(s.0, s.1, 0.2))
    }

    /// Constants for the step from `prev`: the padded range of `prev`, unless
    /// that range is a single point or yields unusable constants, in which case
    /// the padded range of a pilot solution of the step is used.
    pub fn step_constants(&self, prev: &BiotState, t: f64) -> Result<LawConstants> {
        if self.mat.b_law.linear_slope().is_some() && self.mat.h_law.linear_slope().is_some() {
            return Ok(self.mat.constants);
        }
        let (p, s) = prev.ranges(&self.ops);
        let usable = |c: &LawConstants| c.l_b.is_finite() && c.l_h.is_finite() && c.b_m > 0.0;
        if p.0 < p.1 && s.0 < s.1 {
            if let Ok(c) = self.constants_around(prev) {
                if usable(&c) {
                    return Ok(c);
                }
            }
        }
        let pilot = self.pilot_solve(prev, t)?;
        self.constants_around(&pilot)
    }

    /// Scheme configuration for one step from `prev`.
    pub fn step_config(&self, base: &SchemeConfig, choice: LChoice, prev: &BiotState, t: f64) -> Result<(SchemeConfig, Option<LawConstants>)> {
        let c = if choice.needs_constants() { Some(self.step_constants(prev, t)?) } else { None };
        let (l1, l2) = choice.resolve(base.kind, &self.mat, c.as_ref())?;
        Ok((SchemeConfig { l1, l2, ..*base }, c))
    }

    /// Runs the first time step to convergence.
    pub fn first_step(&self, base: &SchemeConfig, choice: LChoice) -> Result<(BiotState, IterationTrace, SchemeConfig)> {
        let t = self.initial.time + self.tau;
        let (cfg, c) = self.step_config(base, choice, &self.initial, t)?;
        let (state, mut trace) = self.context(cfg)?.iterate_to_convergence(&self.initial, t)?;
        trace.flags = c.map(|c| cfg.theorem_flags(&c, self.mat.alpha));
        trace.constants = c;
        Ok((state, trace, cfg))
    }

    /// Full time march; parameters that depend on the constants of non-linear
    /// laws are re-derived every step, otherwise one factorization is reused.
    pub fn march(&self, base: &SchemeConfig, choice: LChoice, steps: usize) -> Result<Vec<(BiotState, IterationTrace)>> {
        let linear = self.mat.b_law.linear_slope().is_some() && self.mat.h_law.linear_slope().is_some();
        if choice.needs_constants() && !linear {
            let mut out: Vec<(BiotState, IterationTrace)> = Vec::with_capacity(steps);
            for n in 1..=steps {
                let prev = out.last().map_or(&self.initial, |s| &s.0);
                let t = self.initial.time + n as f64 * self.tau;
                let wrap = |e: Error| Error::Step { step: n, source: Box::new(e) };
                let (cfg, c) = self.step_config(base, choice, prev, t).map_err(wrap)?;
                let (state, mut trace) = self.context(cfg).map_err(wrap)?.iterate_to_convergence(prev, t).map_err(wrap)?;
                trace.flags = c.map(|c| cfg.theorem_flags(&c, self.mat.alpha));
                trace.constants = c;
                out.push((state, trace));
            }
            Ok(out)
        } else {
            let c = choice.needs_constants().then_some(self.mat.constants);
            let (l1, l2) = choice.resolve(base.kind, &self.mat, c.as_ref())?;
            self.context(SchemeConfig { l1, l2, ..*base })?.time_march(&self.initial, steps)
        }
    }
}

/// L² errors of one state against the exact fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldErrors {
    pub p: f64,
    pub u: f64,
    pub div_u: f64,
    pub q: f64,
}

/// Degree-4 quadrature of `(numeric − exact)²` per cell.
pub fn error_norms(mesh: &Mesh, state: &BiotState, exact: &ExactSolution, t: f64) -> Result<FieldErrors> {
    let rule = quadrature(4)?;
    let mut e = [0.0; 4];
    for c in 0..mesh.n_cells() {
        let g = mesh.cell_geometry(c)?;
        let cell = mesh.cells[c];
        let div: f64 = (0..3)
            .map(|a| state.u.coeffs[2 * cell[a]] * g.grads[a][0] + state.u.coeffs[2 * cell[a] + 1] * g.grads[a][1])
            .sum();
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let x = mesh.map_point(c, *bary);
            let wa = w * g.area;
            let uh = state.u.eval(mesh, c, x)?;
            let qh = state.q.eval(mesh, c, x)?;
            let (ue, qe) = ((exact.u)(x, t), (exact.q)(x, t));
            e[0] += wa * (state.p.coeffs[c] - (exact.p)(x, t)).powi(2);
            e[1] += wa * ((uh[0] - ue[0]).powi(2) + (uh[1] - ue[1]).powi(2));
            e[2] += wa * (div - (exact.div_u)(x, t)).powi(2);
            e[3] += wa * ((qh[0] - qe[0]).powi(2) + (qh[1] - qe[1]).powi(2));
        }
    }
    Ok(FieldErrors { p: e[0].sqrt(), u: e[1].sqrt(), div_u: e[2].sqrt(), q: e[3].sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorEntry {
    pub h: f64,
    pub tau: f64,
    pub errors: FieldErrors,
    /// Observed orders against the previous entry (p, u, q).
    pub order_p: Option<f64>,
    pub order_u: Option<f64>,
    pub order_q: Option<f64>,
}

impl ErrorEntry {
    /// Entry with observed orders against `prev` (if any).
    pub fn next(prev: Option<&ErrorEntry>, h: f64, tau: f64, errors: FieldErrors) -> Self {
        let order = |a: f64, b: f64, h0: f64| if a > 0.0 && b > 0.0 { Some((a / b).ln() / (h0 / h).ln()) } else { None };
        let (order_p, order_u, order_q) = match prev {
            Some(p) => (order(p.errors.p, errors.p, p.h), order(p.errors.u, errors.u, p.h), order(p.errors.q, errors.q, p.h)),
            None => (None, None, None),
        };
        ErrorEntry { h, tau, errors, order_p, order_u, order_q }
    }
}

/// Final-time errors of each problem, with observed orders between
/// consecutive entries.
pub fn error_study(specs: &[ProblemSpec], base: &SchemeConfig, choice: LChoice) -> Result<Vec<ErrorEntry>> {
    let mut out: Vec<ErrorEntry> = Vec::new();
    for spec in specs {
        let setup = spec.build()?;
        let states = setup.march(base, choice, setup.steps)?;
        let last = &states.last().expect("at least one step").0;
        let exact = setup.problem.exact.as_ref().ok_or_else(|| Error::Config("problem has no exact solution".into()))?;
        let errors = error_norms(&setup.mesh, last, exact, last.time)?;
        // cell width along x, the h of the structured grid
        let h = setup.mesh.extent()[0] / setup.mesh.divisions().0 as f64;
        out.push(ErrorEntry::next(out.last(), h, setup.tau, errors));
    }
    Ok(out)
}

pub fn write_errors_csv<W: Write>(out: W, entries: &[ErrorEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["h", "tau", "err_p", "err_u", "err_divu", "err_q", "order_p", "order_u", "order_q"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.4}"));
    for e in entries {
        w.write_record([
            format!("{}", e.h),
            format!("{}", e.tau),
            format!("{:.6e}", e.errors.p),
            format!("{:.6e}", e.errors.u),
            format!("{:.6e}", e.errors.div_u),
            format!("{:.6e}", e.errors.q),
            opt(e.order_p),
            opt(e.order_u),
            opt(e.order_q),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of one sweep or sensitivity cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Converged,
    MaxIter,
    Diverged,
    Failed,
}

impl RunStatus {
    pub fn id(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIter => "maxiter",
            RunStatus::Diverged => "diverged",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellResult {
    pub iterations: usize,
    pub status: RunStatus,
}

fn classify(r: Result<(BiotState, IterationTrace)>) -> CellResult {
    match r {
        Ok((_, t)) if t.converged => CellResult { iterations: t.iterations(), status: RunStatus::Converged },
        Ok((_, t)) => CellResult { iterations: t.iterations(), status: RunStatus::MaxIter },
        Err(Error::Divergence { iteration, .. }) => CellResult { iterations: iteration, status: RunStatus::Diverged },
        Err(_) => CellResult { iterations: 0, status: RunStatus::Failed },
    }
}

/// Worker count from `POROBIOT_THREADS` (unset or invalid: rayon's default).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("POROBIOT_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0) {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// `count` values `10^a … 10^b`, log-spaced.
pub fn logspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![10f64.powf(a)],
        _ => (0..count).map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64)).collect(),
    }
}

/// Iteration counts of the first time step over an `L1 × L2` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub kind: SchemeKind,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    /// `cells[i][j]` for `(l1[i], l2[j])`.
    pub cells: Vec<Vec<CellResult>>,
}

impl SweepGrid {
    /// Converged cell with the fewest iterations; ties go to the smaller L1,
    /// then the smaller L2.
    pub fn argmin(&self) -> Option<(f64, f64, usize)> {
        let mut best: Option<(f64, f64, usize)> = None;
        for (i, row) in self.cells.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if c.status == RunStatus::Converged && best.is_none_or(|b| c.iterations < b.2) {
                    best = Some((self.l1[i], self.l2[j], c.iterations));
                }
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["L1", "L2", "iters", "status"])?;
        for (i, row) in self.cells.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                w.write_record([format!("{:e}", self.l1[i]), format!("{:e}", self.l2[j]), c.iterations.to_string(), c.status.id().into()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn sweep_l(setup: &Setup, base: &SchemeConfig, l1: &[f64], l2: &[f64]) -> Result<SweepGrid> {
    if l1.is_empty() || l2.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let pairs: Vec<(f64, f64)> = l1.iter().flat_map(|&a| l2.iter().map(move |&b| (a, b))).collect();
    let t = setup.initial.time + setup.tau;
    let results: Vec<CellResult> = thread_pool()?.install(|| {
        pairs
            .par_iter()
            .map(|&(a, b)| {
                let cfg = SchemeConfig { l1: a, l2: b, ..*base };
                classify(setup.context(cfg).and_then(|ctx| ctx.iterate_to_convergence(&setup.initial, t)))
            })
            .collect()
    });
    let cells = results.chunks(l2.len()).map(|c| c.to_vec()).collect();
    Ok(SweepGrid { kind: base.kind, l1: l1.to_vec(), l2: l2.to_vec(), cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    H,
    Tau,
    K,
    Alpha,
}

impl Axis {
    pub fn id(self) -> &'static str {
        match self {
            Axis::H => "h",
            Axis::Tau => "tau",
            Axis::K => "K",
            Axis::Alpha => "alpha",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "h" => Ok(Axis::H),
            "tau" | "dt" => Ok(Axis::Tau),
            "k" | "permeability" => Ok(Axis::K),
            "alpha" => Ok(Axis::Alpha),
            other => Err(Error::Input(format!("unknown axis '{other}' (expected h, tau, K or alpha)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub axis: Axis,
    pub value: f64,
    pub l1: f64,
    pub l2: f64,
    pub result: CellResult,
}

/// First-step iteration counts along one axis; every value gets its own
/// problem, constants and solver context.
pub fn sensitivity_grid(spec: &ProblemSpec, base: &SchemeConfig, choice: LChoice, axis: Axis, values: &[f64]) -> Result<Vec<SensitivityRow>> {
    let specs = values.iter().map(|&v| spec.with_axis(axis, v)).collect::<Result<Vec<_>>>()?;
    let rows = thread_pool()?.install(|| {
        specs
            .par_iter()
            .zip(values)
            .map(|(s, &value)| {
                let run = s.build().and_then(|setup| {
                    let (state, trace, cfg) = setup.first_step(base, choice)?;
                    Ok(((state, trace), cfg))
                });
                match run {
                    Ok((r, cfg)) => SensitivityRow { axis, value, l1: cfg.l1, l2: cfg.l2, result: classify(Ok(r)) },
                    Err(e) => SensitivityRow { axis, value, l1: f64::NAN, l2: f64::NAN, result: classify(Err(e)) },
                }
            })
            .collect()
    });
    Ok(rows)
}

pub fn write_sensitivity_csv<W: Write>(out: W, rows: &[SensitivityRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["axis", "value", "iters", "status"])?;
    for r in rows {
        w.write_record([r.axis.id().to_string(), format!("{:e}", r.value), r.result.iterations.to_string(), r.result.status.id().into()])?;
    }
    w.flush()?;
    Ok(())
}

/// Weighted functional values per iteration and whether they decrease.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub kind: SchemeKind,
    pub values: Vec<f64>,
    pub floor: f64,
    pub monotone: bool,
    /// First index `i` with `values[i+1]` not below `values[i]` above the floor.
    pub violation: Option<usize>,
}

/// Splitting: `E_i = (L1 − b_m)‖p_i − p*‖² + (L2 − h_m)‖div(u_i − u*)‖²`,
/// strictly decreasing. Monolithic: `F_i = L1‖p_i − p_{i−1}‖² +
/// (L2 − h_m)‖div(u_i − u_{i−1})‖²`, non-increasing. Checks stop once a
/// value is at or below `floor`.
pub fn verify_contraction(
    ops: &BiotOperators,
    archive: &[BiotState],
    reference: &BiotState,
    cfg: &SchemeConfig,
    c: &LawConstants,
    floor: f64,
) -> ContractionReport {
    let functional = |w1: f64, w2: f64, a: &BiotState, b: &BiotState| {
        let ep: Vec<f64> = a.p.coeffs.iter().zip(&b.p.coeffs).map(|(x, y)| x - y).collect();
        let eu: Vec<f64> = a.u.coeffs.iter().zip(&b.u.coeffs).map(|(x, y)| x - y).collect();
        w1 * ops.m_p.bilinear(&ep, &ep) + w2 * ops.d.bilinear(&eu, &eu)
    };
    let values: Vec<f64> = match cfg.kind {
        SchemeKind::Splitting => archive.iter().map(|s| functional(cfg.l1 - c.b_m, cfg.l2 - c.h_m, s, reference)).collect(),
        SchemeKind::Monolithic => archive.windows(2).map(|w| functional(cfg.l1, cfg.l2 - c.h_m, &w[1], &w[0])).collect(),
    };
    let strict = cfg.kind == SchemeKind::Splitting;
    let violation = values.windows(2).position(|w| {
        w[0] > floor && if strict { w[1] >= w[0] } else { w[1] > w[0] * (1.0 + 1e-12) }
    });
    ContractionReport { kind: cfg.kind, values, floor, monotone: violation.is_none(), violation }
}

/// Probe pressure and top-plate settlement over time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MandelSeries {
    pub probe: [f64; 2],
    /// `(t, p_probe, uy_top)`
    pub rows: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MandelStats {
    pub initial: f64,
    pub peak: f64,
    pub peak_time: f64,
    pub last: f64,
}

pub fn mandel_report(mesh: &Mesh, states: &[&BiotState], probe: [f64; 2]) -> Result<MandelSeries> {
    let cell = mesh.locate(probe).ok_or_else(|| Error::Config(format!("probe {probe:?} lies outside the domain")))?;
    let top = mesh.boundary_vertices(Side::Top);
    let v = *top.first().ok_or_else(|| Error::Config("mesh has no top boundary".into()))?;
    let rows = states.iter().map(|s| (s.time, s.p.coeffs[cell], s.u.coeffs[2 * v + 1])).collect();
    Ok(MandelSeries { probe, rows })
}

impl MandelSeries {
    pub fn stats(&self) -> Option<MandelStats> {
        let first = self.rows.first()?;
        let peak = self.rows.iter().fold(*first, |b, r| if r.1 > b.1 { *r } else { b });
        Some(MandelStats { initial: first.1, peak: peak.1, peak_time: peak.0, last: self.rows.last()?.1 })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "p_probe", "uy_top"])?;
        for (t, p, uy) in &self.rows {
            w.write_record([format!("{t}"), format!("{p:.10e}"), format!("{uy:.10e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// GMRES iteration counts for one monolithic linear system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GmresCounts {
    pub h: f64,
    pub unknowns: usize,
    pub preconditioned: usize,
    pub preconditioned_converged: bool,
    pub plain: usize,
    pub plain_converged: bool,
}

/// Solves the first-step monolithic system of the manufactured problem with
/// `(l1, l2)` by GMRES, with and without the fixed-stress sweep built from
/// `(pc_l1, pc_l2)`.
pub fn gmres_robustness(
    case: LawCase,
    n: usize,
    tau: f64,
    (l1, l2): (f64, f64),
    (pc_l1, pc_l2): (f64, f64),
    precond_opts: GmresOptions,
    plain_opts: GmresOptions,
) -> Result<GmresCounts> {
    let setup = ProblemSpec::manufactured(case, n, tau).build()?;
    let alpha = setup.mat.alpha;
    let constraints = build_constraints(&setup.mesh, &setup.problem, tau)?;
    let red = constraints.combined();
    let full = monolithic_matrix(&setup.ops, alpha, l1, l2, tau);
    let a = Reduction::reduce_matrix(&full, &red, &red);
    let cfg = SchemeConfig::new(SchemeKind::Monolithic, l1, l2);
    let ctx = setup.context(cfg)?;
    let step = ctx.prepare_step(&setup.initial, tau)?;
    let mut rhs = step.loads.f.clone();
    rhs.extend_from_slice(&step.loads.g);
    rhs.extend(step.loads.s.iter().zip(&step.mass_prev).map(|(s, m)| tau * s + m));
    let b = red.restrict(&rhs);
    let pc = fixed_stress_preconditioner(&setup.ops, &constraints, alpha, pc_l1, pc_l2, tau)?;
    let (_, s1, r1) = gmres(&a, &b, None, &pc, &precond_opts);
    let (_, s2, r2) = gmres(&a, &b, None, &IdentityOperator(a.nrows()), &plain_opts);
    Ok(GmresCounts {
        h: 1.0 / n as f64,
        unknowns: a.nrows(),
        preconditioned: r1.iterations,
        preconditioned_converged: s1.converged(),
        plain: r2.iterations,
        plain_converged: s2.converged(),
    })
}

/// Copies only the fields needed for a report (keeps archives small).
pub fn states_of(run: &[(BiotState, IterationTrace)]) -> Vec<&BiotState> {
    run.iter().map(|(s, _)| s).collect()
}

/// `FeFunction` difference norms used in agreement checks: mass-weighted L².
pub fn l2_difference(mass: &crate::linalg::CsrMatrix, a: &FeFunction, b: &FeFunction) -> f64 {
    let d: Vec<f64> = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x - y).collect();
    mass.bilinear(&d, &d).max(0.0).sqrt()
}
