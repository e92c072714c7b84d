//! Python bindings: build a benchmark problem, run either L-scheme, read
//! back fields, traces, errors and sweep tables.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use porobiot::bench::{self, LChoice, ProblemSpec, Setup};
use porobiot::physics::{LawCase, MandelConfig};
use porobiot::schemes::{BiotState, IterationTrace, SchemeConfig, SchemeKind};
use porobiot::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Mesh(_) | Error::Permeability { .. } | Error::Monotonicity { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn law_case(name: &str) -> PyResult<LawCase> {
    LawCase::ALL
        .into_iter()
        .find(|c| c.id() == name.trim().to_ascii_lowercase())
        .ok_or_else(|| PyValueError::new_err(format!("unknown law case '{name}'")))
}

fn scheme_kind(name: &str) -> PyResult<SchemeKind> {
    name.parse().map_err(py_err)
}

/// `rule` is one of fixed, theorem_safe, scaled, undrained, optimal; `l1`,
/// `l2` are values for fixed and factors for scaled.
fn l_choice(rule: &str, l1: f64, l2: f64) -> PyResult<LChoice> {
    Ok(match rule {
        "fixed" => LChoice::Fixed { l1, l2 },
        "theorem_safe" => LChoice::TheoremSafe,
        "scaled" => LChoice::Scaled { f1: l1, f2: l2 },
        "undrained" => LChoice::Undrained,
        "optimal" => LChoice::Optimal,
        other => return Err(PyValueError::new_err(format!("unknown L rule '{other}'"))),
    })
}

/// One time level `(u, q, p)` with coefficient lists in DOF order.
#[pyclass(name = "State", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyState {
    inner: BiotState,
}

#[pymethods]
impl PyState {
    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }

    /// Nodal displacements, interleaved `[u_x0, u_y0, u_x1, ...]`.
    #[getter]
    fn u(&self) -> Vec<f64> {
        self.inner.u.coeffs.clone()
    }

    /// Normal fluxes per edge against the global edge normal.
    #[getter]
    fn q(&self) -> Vec<f64> {
        self.inner.q.coeffs.clone()
    }

    /// Cell pressures.
    #[getter]
    fn p(&self) -> Vec<f64> {
        self.inner.p.coeffs.clone()
    }

    fn __repr__(&self) -> String {
        format!("State(t={}, n_u={}, n_q={}, n_p={})", self.inner.time, self.inner.u.coeffs.len(), self.inner.q.coeffs.len(), self.inner.p.coeffs.len())
    }
}

/// Per-iteration increment norms of one time step.
#[pyclass(name = "Trace", frozen)]
struct PyTrace {
    inner: IterationTrace,
    #[pyo3(get)]
    l1: f64,
    #[pyo3(get)]
    l2: f64,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    /// `(iter, dp, dq, du, sum)` per iteration.
    #[getter]
    fn records(&self) -> Vec<(usize, f64, f64, f64, f64)> {
        self.inner.records.iter().map(|r| (r.iter, r.dp, r.dq, r.du, r.sum)).collect()
    }

    #[getter]
    fn splitting_safe(&self) -> Option<bool> {
        self.inner.flags.map(|f| f.splitting_safe)
    }

    #[getter]
    fn monolithic_safe(&self) -> Option<bool> {
        self.inner.flags.map(|f| f.monolithic_safe)
    }

    fn __repr__(&self) -> String {
        format!("Trace(iterations={}, converged={}, L=({:.4e}, {:.4e}))", self.inner.iterations(), self.inner.converged, self.l1, self.l2)
    }
}

/// A built benchmark problem: mesh, material, operators and initial state.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    spec: ProblemSpec,
    setup: Setup,
}

#[pymethods]
impl PyProblem {
    /// Unit-square problem with the bubble solution.
    #[staticmethod]
    #[pyo3(signature = (case="t1c1", n=16, tau=0.25, final_time=1.0, permeability=1.0, alpha=1.0))]
    fn manufactured(case: &str, n: usize, tau: f64, final_time: f64, permeability: f64, alpha: f64) -> PyResult<Self> {
        let spec = ProblemSpec::Manufactured { case: law_case(case)?, n, tau, final_time, permeability, alpha };
        let setup = spec.build().map_err(py_err)?;
        Ok(PyProblem { spec, setup })
    }

    /// Quarter-domain Mandel problem in SI units.
    #[staticmethod]
    #[pyo3(signature = (case="linear", dt=1.0, steps=500, nx=40, ny=40))]
    fn mandel(case: &str, dt: f64, steps: usize, nx: usize, ny: usize) -> PyResult<Self> {
        let config = MandelConfig { dt, total_time: dt * steps as f64, nx, ny, ..MandelConfig::default() };
        let spec = ProblemSpec::Mandel { case: law_case(case)?, config };
        let setup = spec.build().map_err(py_err)?;
        Ok(PyProblem { spec, setup })
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.setup.tau
    }

    #[getter]
    fn steps(&self) -> usize {
        self.setup.steps
    }

    /// `(n_u, n_q, n_p)`
    #[getter]
    fn dofs(&self) -> (usize, usize, usize) {
        (self.setup.ops.n_u(), self.setup.ops.n_q(), self.setup.ops.n_p())
    }

    #[getter]
    fn initial(&self) -> PyState {
        PyState { inner: self.setup.initial.clone() }
    }

    /// Law constants `L_b, b_m, L_h, h_m` for the first step.
    fn constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let t = self.setup.initial.time + self.setup.tau;
        let c = py.detach(|| self.setup.step_constants(&self.setup.initial, t)).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("l_b", c.l_b)?;
        d.set_item("b_m", c.b_m)?;
        d.set_item("l_h", c.l_h)?;
        d.set_item("h_m", c.h_m)?;
        Ok(d)
    }

    /// Solves the first time step.
    #[pyo3(signature = (scheme="splitting", rule="theorem_safe", l1=1.0, l2=1.0, tol=1e-8, max_iter=500))]
    fn first_step(&self, py: Python<'_>, scheme: &str, rule: &str, l1: f64, l2: f64, tol: f64, max_iter: usize) -> PyResult<(PyState, PyTrace)> {
        let base = SchemeConfig { tol, max_iter, ..SchemeConfig::new(scheme_kind(scheme)?, 1.0, 1.0) };
        let choice = l_choice(rule, l1, l2)?;
        let (state, trace, cfg) = py.detach(|| self.setup.first_step(&base, choice)).map_err(py_err)?;
        Ok((PyState { inner: state }, PyTrace { inner: trace, l1: cfg.l1, l2: cfg.l2 }))
    }

    /// Marches `steps` time steps (all by default).
    #[pyo3(signature = (scheme="splitting", rule="theorem_safe", l1=1.0, l2=1.0, tol=1e-8, max_iter=500, steps=None))]
    #[allow(clippy::too_many_arguments)]
    fn march(
        &self,
        py: Python<'_>,
        scheme: &str,
        rule: &str,
        l1: f64,
        l2: f64,
        tol: f64,
        max_iter: usize,
        steps: Option<usize>,
    ) -> PyResult<Vec<(PyState, PyTrace)>> {
        let base = SchemeConfig { tol, max_iter, ..SchemeConfig::new(scheme_kind(scheme)?, 1.0, 1.0) };
        let choice = l_choice(rule, l1, l2)?;
        let n = steps.unwrap_or(self.setup.steps);
        let run = py.detach(|| self.setup.march(&base, choice, n)).map_err(py_err)?;
        Ok(run
            .into_iter()
            .map(|(s, t)| {
                let (l1, l2) = match (choice, t.constants) {
                    (LChoice::Fixed { l1, l2 }, _) => (l1, l2),
                    (c, consts) => c.resolve(base.kind, &self.setup.mat, consts.as_ref()).unwrap_or((f64::NAN, f64::NAN)),
                };
                (PyState { inner: s }, PyTrace { inner: t, l1, l2 })
            })
            .collect())
    }

    /// L² errors `{p, u, div_u, q}` of `state` against the exact solution.
    fn errors<'py>(&self, py: Python<'py>, state: &PyState) -> PyResult<Bound<'py, PyDict>> {
        let exact = self.setup.problem.exact.as_ref().ok_or_else(|| PyValueError::new_err("this problem has no exact solution"))?;
        let e = bench::error_norms(&self.setup.mesh, &state.inner, exact, state.inner.time).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("p", e.p)?;
        d.set_item("u", e.u)?;
        d.set_item("div_u", e.div_u)?;
        d.set_item("q", e.q)?;
        Ok(d)
    }

    /// First-step iteration counts on the `l1 × l2` grid as
    /// `(L1, L2, iterations, status)` rows.
    #[pyo3(signature = (scheme, l1, l2, tol=1e-8, max_iter=500))]
    fn sweep(&self, py: Python<'_>, scheme: &str, l1: Vec<f64>, l2: Vec<f64>, tol: f64, max_iter: usize) -> PyResult<Vec<(f64, f64, usize, String)>> {
        let base = SchemeConfig { tol, max_iter, ..SchemeConfig::new(scheme_kind(scheme)?, 1.0, 1.0) };
        let grid = py.detach(|| bench::sweep_l(&self.setup, &base, &l1, &l2)).map_err(py_err)?;
        let mut rows = Vec::new();
        for (i, row) in grid.cells.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                rows.push((grid.l1[i], grid.l2[j], c.iterations, c.status.id().to_string()))
            }
        }
        Ok(rows)
    }

    /// `(t, p_probe, uy_top)` rows for the initial state followed by `states`.
    #[pyo3(signature = (states, probe=None))]
    fn mandel_series(&self, states: Vec<PyRef<'_, PyState>>, probe: Option<[f64; 2]>) -> PyResult<Vec<(f64, f64, f64)>> {
        let ProblemSpec::Mandel { config, .. } = &self.spec else {
            return Err(PyValueError::new_err("mandel_series needs a Mandel problem"));
        };
        let probe = probe.unwrap_or([config.a / 4.0, config.b / 2.0]);
        let mut all = vec![&self.setup.initial];
        all.extend(states.iter().map(|s| &s.inner));
        Ok(bench::mandel_report(&self.setup.mesh, &all, probe).map_err(py_err)?.rows)
    }

    fn __repr__(&self) -> String {
        format!("Problem({:?}, tau={}, steps={})", self.spec.case(), self.setup.tau, self.setup.steps)
    }
}

#[pyfunction]
fn logspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    bench::logspace(a, b, count)
}

#[pymodule]
fn pyporobiot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(logspace, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
