//! Command-line front end.
//!
//! Configuration is resolved in three layers: built-in defaults, then an
//! optional TOML file (`--config`), then command-line overrides (named flags
//! and `--set section.key=value`). Every run writes its CSV artifacts and a
//! `manifest.json` into the output directory.
//!
//! Exit status: 0 on success, 2 on a configuration error, 3 when a solve
//! fails or a verification check does not hold.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bench::{
    cells_per_side, error_norms, logspace, mandel_report, sensitivity_grid, states_of, sweep_l, verify_contraction,
    write_errors_csv, write_sensitivity_csv, Axis, ErrorEntry, LChoice, ProblemSpec, RunStatus, Setup,
};
use crate::error::{Error, Result};
use crate::linalg::GmresOptions;
use crate::physics::{LawCase, MandelConfig};
use crate::schemes::{write_trace_csv, BiotState, IterationTrace, LinearSolver, SchemeConfig, SchemeKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "porobiot", version, about = "Splitting and monolithic L-schemes for non-linear Biot poromechanics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CommandKind {
    Manufactured,
    Mandel,
    Sweep,
    Sensitivity,
    Verify,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Manufactured solution on the unit square: errors.csv, trace.csv
    Manufactured(RunArgs),
    /// Quarter-domain Mandel problem: mandel.csv, trace.csv
    Mandel(RunArgs),
    /// First-step iteration counts over an (L1, L2) grid: sweep.csv
    Sweep(RunArgs),
    /// First-step iteration counts along h, tau, K or alpha: sensitivity.csv
    Sensitivity(RunArgs),
    /// Contraction, residual and cross-scheme checks on the first step: verify.csv
    Verify(RunArgs),
}

impl Command {
    fn split(self) -> (CommandKind, RunArgs) {
        match self {
            Command::Manufactured(a) => (CommandKind::Manufactured, a),
            Command::Mandel(a) => (CommandKind::Mandel, a),
            Command::Sweep(a) => (CommandKind::Sweep, a),
            Command::Sensitivity(a) => (CommandKind::Sensitivity, a),
            Command::Verify(a) => (CommandKind::Verify, a),
        }
    }
}

impl CommandKind {
    fn id(self) -> &'static str {
        match self {
            CommandKind::Manufactured => "manufactured",
            CommandKind::Mandel => "mandel",
            CommandKind::Sweep => "sweep",
            CommandKind::Sensitivity => "sensitivity",
            CommandKind::Verify => "verify",
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
struct RunArgs {
    /// TOML file with [material] [laws] [problem] [scheme] [solver] [output]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override `section.key=value` (repeatable, applied last)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Zero timings so repeated runs give identical files
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// manufactured or mandel (sweep, sensitivity and verify)
    #[arg(long)]
    problem: Option<String>,
    /// Law preset: linear, t1c1..t1c5, t2c1..t2c3
    #[arg(long)]
    case: Option<String>,
    /// Mandel law preset (t2c1..t2c3); implies the Mandel problem
    #[arg(long)]
    nonlinear: Option<String>,
    /// Mesh size
    #[arg(long)]
    h: Option<f64>,
    /// Time step of the manufactured problem
    #[arg(long)]
    tau: Option<f64>,
    /// Time step of the Mandel problem (s)
    #[arg(long)]
    dt: Option<f64>,
    /// Number of Mandel time steps
    #[arg(long)]
    steps: Option<usize>,
    /// splitting or monolithic
    #[arg(long)]
    scheme: Option<String>,
    /// L rule: auto, fixed, theorem_safe, scaled, undrained, optimal
    #[arg(long)]
    rule: Option<String>,
    /// L1 value (grid for sweep: `logspace(a,b,n)` or a comma list)
    #[arg(long = "L1")]
    l1: Option<String>,
    /// L2 value (grid for sweep)
    #[arg(long = "L2")]
    l2: Option<String>,
    /// Sensitivity axis: h, tau, K, alpha
    #[arg(long)]
    axis: Option<String>,
    /// Sensitivity values (`logspace(a,b,n)` or a comma list)
    #[arg(long)]
    values: Option<String>,
    /// Manufactured refinement levels (h and tau halve per level)
    #[arg(long)]
    levels: Option<usize>,
}

/// Material overrides; unset keys keep the problem's own values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSection {
    pub alpha: Option<f64>,
    pub permeability: Option<f64>,
    /// Mandel only, like the remaining keys.
    pub viscosity: Option<f64>,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub m_biot: Option<f64>,
    pub force: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LawsSection {
    /// Defaults to t1c1 (manufactured) or linear (Mandel).
    pub case: Option<LawCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Manufactured,
    Mandel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    /// Used by sweep, sensitivity and verify; the other commands fix it.
    pub kind: Option<ProblemKind>,
    pub h: Option<f64>,
    pub tau: Option<f64>,
    pub final_time: Option<f64>,
    pub levels: usize,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    /// Mandel pressure probe; defaults to `(a/4, b/2)`.
    pub probe: Option<[f64; 2]>,
    pub axis: Axis,
    pub values: String,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            kind: None,
            h: None,
            tau: None,
            final_time: None,
            levels: 1,
            dt: None,
            steps: None,
            a: None,
            b: None,
            nx: None,
            ny: None,
            probe: None,
            axis: Axis::K,
            values: "1e-4,1e-2,1".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    /// Linear laws: undrained split (splitting) or `(1/M, λ)` (monolithic);
    /// non-linear laws: theorem-safe.
    Auto,
    Fixed,
    TheoremSafe,
    /// `l1`, `l2` act as factors on `L_b`, `L_h`.
    Scaled,
    Undrained,
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub kind: SchemeKind,
    pub rule: RuleName,
    pub l1: f64,
    pub l2: f64,
    pub l1_grid: String,
    pub l2_grid: String,
    pub tol: f64,
    pub max_iter: usize,
    pub divergence_factor: f64,
}

impl Default for SchemeSection {
    fn default() -> Self {
        let d = SchemeConfig::new(SchemeKind::Splitting, 1.0, 1.0);
        SchemeSection {
            kind: d.kind,
            rule: RuleName::Auto,
            l1: 1.0,
            l2: 1.0,
            l1_grid: "logspace(-2,2,9)".into(),
            l2_grid: "logspace(-2,2,9)".into(),
            tol: d.tol,
            max_iter: d.max_iter,
            divergence_factor: d.divergence_factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Direct,
    Gmres,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub linear: LinearKind,
    pub preconditioned: bool,
    pub restart: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let g = GmresOptions::default();
        SolverSection { linear: LinearKind::Direct, preconditioned: true, restart: g.restart, tol: g.tol, max_iter: g.max_iter }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub deterministic: bool,
    /// Recorded in the manifest; no run draws random numbers.
    pub seed: u64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), deterministic: false, seed: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub material: MaterialSection,
    pub laws: LawsSection,
    pub problem: ProblemSection,
    pub scheme: SchemeSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

impl RunConfig {
    /// Defaults, then `file`, then `overrides` (`section.key=value`), key by key.
    pub fn resolve(file: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = toml::Table::try_from(RunConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(text) = file {
            let parsed: toml::Table = text.parse().map_err(|e| Error::Config(format!("config file: {e}")))?;
            merge(&mut table, parsed);
        }
        for (key, value) in overrides {
            let (section, field) = key
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("override key '{key}' must look like section.key")))?;
            let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(t) = entry else {
                return Err(Error::Config(format!("'{section}' is not a section")));
            };
            t.insert(field.to_string(), literal(value));
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }
}

fn merge(base: &mut toml::Table, other: toml::Table) {
    for (k, v) in other {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// A TOML literal when `value` parses as one, else a plain string.
fn literal(value: &str) -> toml::Value {
    format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

/// `logspace(a,b,n)` or a comma-separated list of numbers.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let s = spec.trim();
    let bad = || Error::Config(format!("cannot parse grid '{spec}' (use logspace(a,b,n) or a comma list)"));
    if let Some(inner) = s.strip_prefix("logspace(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[0].parse().map_err(|_| bad())?;
        let b: f64 = parts[1].parse().map_err(|_| bad())?;
        let n: usize = parts[2].parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        return Ok(logspace(a, b, n));
    }
    let v = s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(bad());
    }
    Ok(v)
}

fn flag_overrides(cmd: CommandKind, a: &RunArgs) -> Vec<(String, String)> {
    let mut o: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| o.push((k.to_string(), v));
    let quoted = |s: &str| format!("\"{}\"", s.trim().to_ascii_lowercase());
    if let Some(p) = &a.problem {
        put("problem.kind", quoted(p));
    }
    if let Some(c) = &a.case {
        put("laws.case", quoted(c));
    }
    if let Some(c) = &a.nonlinear {
        put("laws.case", quoted(c));
        put("problem.kind", quoted("mandel"));
    }
    if let Some(v) = a.h {
        put("problem.h", format!("{v:?}"));
    }
    if let Some(v) = a.tau {
        put("problem.tau", format!("{v:?}"));
    }
    if let Some(v) = a.dt {
        put("problem.dt", format!("{v:?}"));
    }
    if let Some(v) = a.steps {
        put("problem.steps", v.to_string());
    }
    if let Some(v) = a.levels {
        put("problem.levels", v.to_string());
    }
    if let Some(v) = &a.axis {
        put("problem.axis", quoted(v));
    }
    if let Some(v) = &a.values {
        put("problem.values", format!("{v:?}"));
    }
    if let Some(s) = &a.scheme {
        put("scheme.kind", quoted(s));
    }
    for (name, value) in [("l1", &a.l1), ("l2", &a.l2)] {
        if let Some(v) = value {
            if cmd == CommandKind::Sweep {
                put(&format!("scheme.{name}_grid"), format!("{v:?}"));
            } else {
                put(&format!("scheme.{name}"), v.clone());
            }
        }
    }
    if cmd != CommandKind::Sweep && a.rule.is_none() && (a.l1.is_some() || a.l2.is_some()) {
        put("scheme.rule", quoted("fixed"));
    }
    if let Some(r) = &a.rule {
        put("scheme.rule", quoted(r));
    }
    if let Some(d) = &a.out {
        put("output.dir", format!("{:?}", d.to_string_lossy()));
    }
    if a.deterministic {
        put("output.deterministic", "true".into());
    }
    if let Some(s) = a.seed {
        put("output.seed", s.to_string());
    }
    o
}

fn parse_set(items: &[String]) -> Result<Vec<(String, String)>> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("override '{s}' must look like section.key=value")))
        })
        .collect()
}

/// Everything a run needs, derived from a [`RunConfig`].
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub problem: ProblemSpec,
    pub scheme: SchemeConfig,
    pub rule: LChoice,
}

impl RunConfig {
    fn problem_kind(&self, cmd: CommandKind) -> ProblemKind {
        match cmd {
            CommandKind::Manufactured => ProblemKind::Manufactured,
            CommandKind::Mandel => ProblemKind::Mandel,
            _ => self.problem.kind.clone().unwrap_or(match self.laws.case {
                Some(LawCase::T2c1 | LawCase::T2c2 | LawCase::T2c3) => ProblemKind::Mandel,
                _ => ProblemKind::Manufactured,
            }),
        }
    }

    pub fn problem_spec(&self, kind: &ProblemKind) -> Result<ProblemSpec> {
        let (m, p) = (&self.material, &self.problem);
        match kind {
            ProblemKind::Manufactured => {
                let mandel_only = [
                    ("material.viscosity", m.viscosity.is_some()),
                    ("material.mu", m.mu.is_some()),
                    ("material.lambda", m.lambda.is_some()),
                    ("material.m_biot", m.m_biot.is_some()),
                    ("material.force", m.force.is_some()),
                    ("problem.dt", p.dt.is_some()),
                    ("problem.steps", p.steps.is_some()),
                    ("problem.a", p.a.is_some()),
                    ("problem.b", p.b.is_some()),
                    ("problem.nx", p.nx.is_some()),
                    ("problem.ny", p.ny.is_some()),
                    ("problem.probe", p.probe.is_some()),
                ];
                if let Some((k, _)) = mandel_only.iter().find(|(_, set)| *set) {
                    return Err(Error::Config(format!("{k} applies to the mandel problem only")));
                }
                let case = self.laws.case.unwrap_or(LawCase::T1c1);
                let n = cells_per_side(p.h.unwrap_or(1.0 / 16.0), 1.0)?;
                Ok(ProblemSpec::Manufactured {
                    case,
                    n,
                    tau: p.tau.unwrap_or(0.25),
                    final_time: p.final_time.unwrap_or(1.0),
                    permeability: m.permeability.unwrap_or(1.0),
                    alpha: m.alpha.unwrap_or(1.0),
                })
            }
            ProblemKind::Mandel => {
                if p.final_time.is_some() {
                    return Err(Error::Config("problem.final_time applies to the manufactured problem; use problem.steps".into()));
                }
                let mut c = MandelConfig::default();
                let set = |dst: &mut f64, v: Option<f64>| {
                    if let Some(v) = v {
                        *dst = v;
                    }
                };
                set(&mut c.a, p.a);
                set(&mut c.b, p.b);
                set(&mut c.force, m.force);
                set(&mut c.permeability, m.permeability);
                set(&mut c.viscosity, m.viscosity);
                set(&mut c.alpha, m.alpha);
                set(&mut c.m_biot, m.m_biot);
                set(&mut c.mu, m.mu);
                set(&mut c.lambda, m.lambda);
                if let Some(h) = p.h {
                    c.nx = cells_per_side(h, c.a)?;
                    c.ny = cells_per_side(h, c.b)?;
                }
                c.nx = p.nx.unwrap_or(c.nx);
                c.ny = p.ny.unwrap_or(c.ny);
                let steps = p.steps.unwrap_or(c.steps());
                c.dt = p.dt.or(p.tau).unwrap_or(c.dt);
                c.total_time = c.dt * steps as f64;
                Ok(ProblemSpec::Mandel { case: self.laws.case.unwrap_or(LawCase::Linear), config: c })
            }
        }
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig> {
        let s = &self.scheme;
        let linear = match self.solver.linear {
            LinearKind::Direct => LinearSolver::Direct,
            LinearKind::Gmres => LinearSolver::Gmres {
                preconditioned: self.solver.preconditioned,
                options: GmresOptions { restart: self.solver.restart, tol: self.solver.tol, max_iter: self.solver.max_iter },
            },
        };
        let cfg = SchemeConfig {
            tol: s.tol,
            max_iter: s.max_iter,
            divergence_factor: s.divergence_factor,
            linear,
            ..SchemeConfig::new(s.kind, s.l1, s.l2)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn l_choice(&self, case: LawCase) -> LChoice {
        let s = &self.scheme;
        match s.rule {
            RuleName::Auto => match (case, s.kind) {
                (LawCase::Linear, SchemeKind::Splitting) => LChoice::Undrained,
                (LawCase::Linear, SchemeKind::Monolithic) => LChoice::Scaled { f1: 1.0, f2: 1.0 },
                _ => LChoice::TheoremSafe,
            },
            RuleName::Fixed => LChoice::Fixed { l1: s.l1, l2: s.l2 },
            RuleName::TheoremSafe => LChoice::TheoremSafe,
            RuleName::Scaled => LChoice::Scaled { f1: s.l1, f2: s.l2 },
            RuleName::Undrained => LChoice::Undrained,
            RuleName::Optimal => LChoice::Optimal,
        }
    }

    fn resolved(&self, cmd: CommandKind) -> Result<Resolved> {
        let problem = self.problem_spec(&self.problem_kind(cmd))?;
        let scheme = self.scheme_config()?;
        let rule = self.l_choice(problem.case());
        Ok(Resolved { problem, scheme, rule })
    }
}

/// Entry point; `args[0]` is the program name.
pub fn run(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (cmd, a) = cli.command.split();
    match execute(cmd, &a) {
        Ok(None) => EXIT_OK,
        Ok(Some(failure)) => {
            eprintln!("porobiot {}: {failure}", cmd.id());
            EXIT_SOLVER
        }
        Err(e) => {
            eprintln!("porobiot {}: {e}", cmd.id());
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Step { source, .. } => exit_code(source),
        Error::Divergence { .. } | Error::Factorization(_) | Error::LinearSolve(_) | Error::Domain { .. } => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

struct Outcome {
    files: Vec<String>,
    summary: serde_json::Value,
    /// Set when the run finished but did not succeed.
    failure: Option<String>,
}

fn execute(cmd: CommandKind, a: &RunArgs) -> Result<Option<String>> {
    let start = Instant::now();
    let file = match &a.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?),
        None => None,
    };
    let mut overrides = flag_overrides(cmd, a);
    overrides.extend(parse_set(&a.set)?);
    let cfg = RunConfig::resolve(file.as_deref(), &overrides)?;
    let res = cfg.resolved(cmd)?;
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
    let det = cfg.output.deterministic;
    let outcome = match cmd {
        CommandKind::Manufactured => run_manufactured(&cfg, &res, &dir, det)?,
        CommandKind::Mandel => run_mandel(&cfg, &res, &dir, det)?,
        CommandKind::Sweep => run_sweep(&cfg, &res, &dir)?,
        CommandKind::Sensitivity => run_sensitivity(&cfg, &res, &dir)?,
        CommandKind::Verify => run_verify(&res, &dir)?,
    };
    let seconds = if det { 0.0 } else { start.elapsed().as_secs_f64() };
    let manifest = json!({
        "command": cmd.id(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "resolved": res,
        "threads_env": std::env::var("POROBIOT_THREADS").ok(),
        "outputs": outcome.files,
        "summary": outcome.summary,
        "failure": outcome.failure,
        "seconds": seconds,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(outcome.failure)
}

fn create(dir: &Path, name: &str, files: &mut Vec<String>) -> Result<BufWriter<File>> {
    files.push(name.to_string());
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_traces(dir: &Path, run: &[(BiotState, IterationTrace)], det: bool, files: &mut Vec<String>) -> Result<()> {
    let refs: Vec<(usize, &IterationTrace)> = run.iter().enumerate().map(|(i, (_, t))| (i + 1, t)).collect();
    write_trace_csv(create(dir, "trace.csv", files)?, &refs, det)
}

fn unconverged(run: &[(BiotState, IterationTrace)]) -> Option<String> {
    let bad: Vec<usize> = run.iter().enumerate().filter(|(_, (_, t))| !t.converged).map(|(i, _)| i + 1).collect();
    (!bad.is_empty()).then(|| format!("{} time steps hit the iteration cap (first: step {})", bad.len(), bad[0]))
}

fn run_manufactured(cfg: &RunConfig, res: &Resolved, dir: &Path, det: bool) -> Result<Outcome> {
    let ProblemSpec::Manufactured { n, tau, .. } = res.problem else {
        return Err(Error::Config("manufactured command needs the manufactured problem".into()));
    };
    if cfg.problem.levels == 0 {
        return Err(Error::Config("problem.levels must be at least 1".into()));
    }
    let mut entries: Vec<ErrorEntry> = Vec::new();
    let mut last_run = Vec::new();
    let mut failure = None;
    for level in 0..cfg.problem.levels {
        let scale = 1usize << level;
        let mut spec = res.problem.clone();
        if let ProblemSpec::Manufactured { n: sn, tau: st, .. } = &mut spec {
            *sn = n * scale;
            *st = tau / scale as f64;
        }
        let setup = spec.build()?;
        let run = setup.march(&res.scheme, res.rule, setup.steps)?;
        failure = failure.or_else(|| unconverged(&run));
        let last = &run.last().expect("at least one step").0;
        let exact = setup.problem.exact.as_ref().expect("manufactured problems carry an exact solution");
        let errors = error_norms(&setup.mesh, last, exact, last.time)?;
        entries.push(ErrorEntry::next(entries.last(), 1.0 / (n * scale) as f64, setup.tau, errors));
        last_run = run;
    }
    let mut files = Vec::new();
    write_errors_csv(create(dir, "errors.csv", &mut files)?, &entries)?;
    write_traces(dir, &last_run, det, &mut files)?;
    let iterations: Vec<usize> = last_run.iter().map(|(_, t)| t.iterations()).collect();
    Ok(Outcome { files, summary: json!({ "errors": entries, "iterations_per_step": iterations }), failure })
}

fn run_mandel(cfg: &RunConfig, res: &Resolved, dir: &Path, det: bool) -> Result<Outcome> {
    let ProblemSpec::Mandel { config, .. } = &res.problem else {
        return Err(Error::Config("mandel command needs the Mandel problem".into()));
    };
    let setup = res.problem.build()?;
    let run = setup.march(&res.scheme, res.rule, setup.steps)?;
    let mut states = vec![&setup.initial];
    states.extend(states_of(&run));
    let probe = cfg.problem.probe.unwrap_or([config.a / 4.0, config.b / 2.0]);
    let series = mandel_report(&setup.mesh, &states, probe)?;
    let mut files = Vec::new();
    series.write_csv(create(dir, "mandel.csv", &mut files)?)?;
    write_traces(dir, &run, det, &mut files)?;
    let summary = json!({
        "initial_pressure": config.initial_pressure(),
        "skempton": config.skempton(),
        "undrained_poisson": config.undrained_poisson(),
        "probe": probe,
        "stats": series.stats(),
        "total_iterations": run.iter().map(|(_, t)| t.iterations()).sum::<usize>(),
    });
    Ok(Outcome { files, summary, failure: unconverged(&run) })
}

fn run_sweep(cfg: &RunConfig, res: &Resolved, dir: &Path) -> Result<Outcome> {
    let l1 = parse_grid(&cfg.scheme.l1_grid)?;
    let l2 = parse_grid(&cfg.scheme.l2_grid)?;
    let setup = res.problem.build()?;
    let grid = sweep_l(&setup, &res.scheme, &l1, &l2)?;
    let mut files = Vec::new();
    grid.write_csv(create(dir, "sweep.csv", &mut files)?)?;
    let constants = law_constants(&setup);
    let summary = json!({
        "argmin": grid.argmin().map(|(l1, l2, it)| json!({ "l1": l1, "l2": l2, "iterations": it })),
        "cells": l1.len() * l2.len(),
        "constants": constants,
    });
    Ok(Outcome { files, summary, failure: None })
}

fn law_constants(setup: &Setup) -> Option<crate::physics::LawConstants> {
    setup.step_constants(&setup.initial, setup.initial.time + setup.tau).ok()
}

fn run_sensitivity(cfg: &RunConfig, res: &Resolved, dir: &Path) -> Result<Outcome> {
    let values = parse_grid(&cfg.problem.values)?;
    let rows = sensitivity_grid(&res.problem, &res.scheme, res.rule, cfg.problem.axis, &values)?;
    let mut files = Vec::new();
    write_sensitivity_csv(create(dir, "sensitivity.csv", &mut files)?, &rows)?;
    let failed = rows.iter().filter(|r| r.result.status == RunStatus::Failed).count();
    Ok(Outcome { files, summary: json!({ "rows": rows }), failure: (failed > 0).then(|| format!("{failed} runs failed to set up or solve")) })
}

fn run_verify(res: &Resolved, dir: &Path) -> Result<Outcome> {
    let setup = res.problem.build()?;
    let t = setup.initial.time + setup.tau;
    let base = |kind| SchemeConfig { kind, keep_iterates: true, ..res.scheme };
    let mut runs = Vec::new();
    for kind in [SchemeKind::Splitting, SchemeKind::Monolithic] {
        runs.push(setup.first_step(&base(kind), LChoice::TheoremSafe)?);
    }
    let (rcfg, _) = setup.step_config(&base(SchemeKind::Monolithic), LChoice::TheoremSafe, &setup.initial, t)?;
    let tight = SchemeConfig { tol: res.scheme.tol * 1e-5, max_iter: 50 * res.scheme.max_iter, keep_iterates: false, ..rcfg };
    let (reference, rtrace) = setup.context(tight)?.iterate_to_convergence(&setup.initial, t)?;
    let mut files = Vec::new();
    let mut w = csv::Writer::from_writer(create(dir, "verify.csv", &mut files)?);
    w.write_record(["scheme", "iter", "functional"])?;
    let mut checks = Vec::new();
    let mut problems = Vec::new();
    for (state, trace, cfg) in &runs {
        let c = trace.constants.ok_or_else(|| Error::Config("theorem-safe run without law constants".into()))?;
        let report = verify_contraction(&setup.ops, &trace.iterates, &reference, cfg, &c, 10.0 * cfg.tol);
        for (i, v) in report.values.iter().enumerate() {
            w.write_record([cfg.kind.id().to_string(), i.to_string(), format!("{v:.10e}")])?;
        }
        let residual = setup.context(*cfg)?.nonlinear_residual(&setup.initial, state)?;
        if !trace.converged {
            problems.push(format!("{} hit the iteration cap", cfg.kind));
        }
        if !report.monotone {
            problems.push(format!("{} functional increases after entry {:?}", cfg.kind, report.violation));
        }
        checks.push(json!({
            "scheme": cfg.kind,
            "l1": cfg.l1,
            "l2": cfg.l2,
            "iterations": trace.iterations(),
            "converged": trace.converged,
            "flags": trace.flags,
            "monotone": report.monotone,
            "residual": residual,
        }));
    }
    w.flush()?;
    let gap = |f: fn(&BiotState) -> &crate::fem::FeFunction, m: &crate::linalg::CsrMatrix| crate::bench::l2_difference(m, f(&runs[0].0), f(&runs[1].0));
    let gaps = json!({
        "p": gap(|s| &s.p, &setup.ops.m_p),
        "q": gap(|s| &s.q, &setup.ops.mass_q),
        "u": gap(|s| &s.u, &setup.ops.mass_u),
    });
    if !rtrace.converged {
        problems.push("reference solve hit the iteration cap".into());
    }
    let failure = (!problems.is_empty()).then(|| problems.join("; "));
    Ok(Outcome { files, summary: json!({ "runs": checks, "scheme_gap": gaps }), failure })
}
