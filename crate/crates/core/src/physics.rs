//! Constitutive laws, material parameters, and the two benchmark problems.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Point, Side};

/// Elementary monotone functions the catalog laws are built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LawTerm {
    Identity,
    Cube,
    Exp,
    /// `sign(x)·|x|^{1/3}`
    OddCbrt,
    /// `sign(x)·|x|^{5/3}`
    OddPow53,
}

impl LawTerm {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            LawTerm::Identity => x,
            LawTerm::Cube => x * x * x,
            LawTerm::Exp => x.exp(),
            LawTerm::OddCbrt => x.cbrt(),
            LawTerm::OddPow53 => x.signum() * x.abs().powf(5.0 / 3.0),
        }
    }

    pub fn deriv(self, x: f64) -> f64 {
        match self {
            LawTerm::Identity => 1.0,
            LawTerm::Cube => 3.0 * x * x,
            LawTerm::Exp => x.exp(),
            // infinite at the origin
            LawTerm::OddCbrt => 1.0 / (3.0 * x.abs().powf(2.0 / 3.0)),
            LawTerm::OddPow53 => 5.0 / 3.0 * x.abs().powf(2.0 / 3.0),
        }
    }

    fn symbol(self, arg: &str) -> String {
        match self {
            LawTerm::Identity => arg.to_string(),
            LawTerm::Cube => format!("{arg}^3"),
            LawTerm::Exp => format!("exp({arg})"),
            LawTerm::OddCbrt => format!("cbrt({arg})"),
            LawTerm::OddPow53 => format!("cbrt({arg}^5)"),
        }
    }
}

/// A scalar law `x ↦ Σ c_k·term_k(x)` with non-negative weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearLaw {
    pub label: String,
    terms: Vec<(f64, LawTerm)>,
    /// Interval on which the stored constants are certified.
    pub admissible: (f64, f64),
}

impl NonlinearLaw {
    pub fn new(label: impl Into<String>, terms: Vec<(f64, LawTerm)>) -> Result<Self> {
        if terms.iter().any(|(c, _)| !c.is_finite() || *c < 0.0) {
            return Err(Error::Input("law weights must be finite and non-negative".into()));
        }
        Ok(NonlinearLaw { label: label.into(), terms, admissible: (-1.0, 1.0) })
    }

    pub fn linear(label: impl Into<String>, slope: f64) -> Self {
        NonlinearLaw { label: label.into(), terms: vec![(slope, LawTerm::Identity)], admissible: (f64::MIN, f64::MAX) }
    }

    /// The identically zero law (incompressible fluid when used for `b`).
    pub fn zero() -> Self {
        NonlinearLaw { label: "0".into(), terms: Vec::new(), admissible: (f64::MIN, f64::MAX) }
    }

    pub fn with_admissible(mut self, lo: f64, hi: f64) -> Self {
        self.admissible = (lo, hi);
        self
    }

    pub fn terms(&self) -> &[(f64, LawTerm)] {
        &self.terms
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|&(c, t)| c * t.eval(x)).sum()
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.terms.iter().filter(|(c, _)| *c != 0.0).map(|&(c, t)| c * t.deriv(x)).sum()
    }

    /// Slope when the law is affine in its argument.
    pub fn linear_slope(&self) -> Option<f64> {
        if self.terms.iter().all(|(c, t)| *t == LawTerm::Identity || *c == 0.0) {
            Some(self.terms.iter().map(|(c, _)| c).sum())
        } else {
            None
        }
    }

    pub fn formula(&self, arg: &str) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.terms
            .iter()
            .map(|&(c, t)| if c == 1.0 { t.symbol(arg) } else { format!("{c:e}*{}", t.symbol(arg)) })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

/// Lower and upper derivative bounds over a sampled interval.
///
/// The sample grid is uniform with the endpoints included; the origin is added
/// when it lies inside the interval because every catalog derivative attains an
/// extremum there. A zero derivative at isolated points is reported as the
/// infimum; negative or undefined derivatives are an error.
pub fn estimate_constants(law: &NonlinearLaw, range: (f64, f64), samples: usize) -> Result<(f64, f64)> {
    let (lo, hi) = range;
    if samples < 2 {
        return Err(Error::Input("constant estimation needs at least 2 samples".into()));
    }
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(Error::Input(format!("invalid sampling range [{lo}, {hi}]")));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut visit = |x: f64| -> Result<()> {
        let d = law.deriv(x);
        if d.is_nan() || d < 0.0 {
            return Err(Error::Monotonicity { at: x, deriv: d, lo, hi });
        }
        min = min.min(d);
        max = max.max(d);
        Ok(())
    };
    for k in 0..samples {
        let x = if k + 1 == samples { hi } else { lo + (hi - lo) * k as f64 / (samples - 1) as f64 };
        visit(x)?;
    }
    if lo < 0.0 && hi > 0.0 {
        visit(0.0)?;
    }
    Ok((min, max))
}

/// Padded interval `[lo − 0.2|lo|, hi + 0.2|hi|]` (relative padding keeps signs).
pub fn padded_range(lo: f64, hi: f64, pad: f64) -> (f64, f64) {
    (lo - pad * lo.abs(), hi + pad * hi.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawCase {
    Linear,
    T1c1,
    T1c2,
    T1c3,
    T1c4,
    T1c5,
    T2c1,
    T2c2,
    T2c3,
}

impl LawCase {
    pub const ALL: [LawCase; 9] = [
        LawCase::Linear,
        LawCase::T1c1,
        LawCase::T1c2,
        LawCase::T1c3,
        LawCase::T1c4,
        LawCase::T1c5,
        LawCase::T2c1,
        LawCase::T2c2,
        LawCase::T2c3,
    ];
    pub const MANUFACTURED: [LawCase; 5] = [LawCase::T1c1, LawCase::T1c2, LawCase::T1c3, LawCase::T1c4, LawCase::T1c5];

    pub fn id(self) -> &'static str {
        match self {
            LawCase::Linear => "linear",
            LawCase::T1c1 => "t1c1",
            LawCase::T1c2 => "t1c2",
            LawCase::T1c3 => "t1c3",
            LawCase::T1c4 => "t1c4",
            LawCase::T1c5 => "t1c5",
            LawCase::T2c1 => "t2c1",
            LawCase::T2c2 => "t2c2",
            LawCase::T2c3 => "t2c3",
        }
    }
}

impl fmt::Display for LawCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for LawCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        LawCase::ALL
            .into_iter()
            .find(|c| c.id() == key)
            .ok_or_else(|| Error::Input(format!("unknown law case '{s}' (expected one of linear, t1c1..t1c5, t2c1..t2c3)")))
    }
}

/// `(b, h)` for a catalog case; `m_biot` and `lambda` scale the linear and
/// Mandel-type cases.
pub fn law_catalog(case: LawCase, m_biot: f64, lambda: f64) -> (NonlinearLaw, NonlinearLaw) {
    use LawTerm::*;
    let law = |label: &str, terms: Vec<(f64, LawTerm)>| NonlinearLaw { label: label.into(), terms, admissible: (-1.0, 1.0) };
    let inv_m = 1.0 / m_biot;
    match case {
        LawCase::Linear => (NonlinearLaw::linear("p/M", inv_m), NonlinearLaw::linear("lambda*s", lambda)),
        LawCase::T1c1 => (law("exp(p)", vec![(1.0, Exp)]), law("s^3", vec![(1.0, Cube)])),
        LawCase::T1c2 => (law("p^3", vec![(1.0, Cube)]), law("s^3", vec![(1.0, Cube)])),
        LawCase::T1c3 => (law("cbrt(p)", vec![(1.0, OddCbrt)]), law("s^3", vec![(1.0, Cube)])),
        LawCase::T1c4 => (law("p^3", vec![(1.0, Cube)]), law("cbrt(s^5)", vec![(1.0, OddPow53)])),
        LawCase::T1c5 => (law("cbrt(p)", vec![(1.0, OddCbrt)]), law("cbrt(s^5)", vec![(1.0, OddPow53)])),
        LawCase::T2c1 => (
            law("(p+p^3)/M", vec![(inv_m, Identity), (inv_m, Cube)]),
            law("lambda*(s+s^3)", vec![(lambda, Identity), (lambda, Cube)]),
        ),
        LawCase::T2c2 => (
            law("(p+cbrt(p))/M", vec![(inv_m, Identity), (inv_m, OddCbrt)]),
            law("lambda*(s+cbrt(s^5))", vec![(lambda, Identity), (lambda, OddPow53)]),
        ),
        LawCase::T2c3 => (
            law("exp(p)/M", vec![(inv_m, Exp)]),
            law("lambda*(s+cbrt(s^5))", vec![(lambda, Identity), (lambda, OddPow53)]),
        ),
    }
}

/// Derivative bounds of `b` and `h`: `b_m ≤ b′ ≤ L_b`, `h_m ≤ h′ ≤ L_h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawConstants {
    pub b_m: f64,
    pub l_b: f64,
    pub h_m: f64,
    pub l_h: f64,
}

impl LawConstants {
    pub fn estimate(b: &NonlinearLaw, h: &NonlinearLaw, p_range: (f64, f64), s_range: (f64, f64), samples: usize) -> Result<Self> {
        let (b_m, l_b) = estimate_constants(b, p_range, samples)?;
        let (h_m, l_h) = estimate_constants(h, s_range, samples)?;
        Ok(LawConstants { b_m, l_b, h_m, l_h })
    }
}

/// Scalar permeability, constant or varying in space.
#[derive(Clone)]
pub enum Permeability {
    Constant(f64),
    Field(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl Permeability {
    pub fn at(&self, x: Point) -> f64 {
        match self {
            Permeability::Constant(k) => *k,
            Permeability::Field(f) => f(x),
        }
    }
}

impl fmt::Debug for Permeability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Permeability::Constant(k) => write!(f, "Constant({k:e})"),
            Permeability::Field(_) => f.write_str("Field(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaterialModel {
    pub alpha: f64,
    pub mu: f64,
    pub b_law: NonlinearLaw,
    pub h_law: NonlinearLaw,
    pub permeability: Permeability,
    pub nu_f: f64,
    pub rho_f: f64,
    pub gravity: [f64; 2],
    pub constants: LawConstants,
    /// Bounds `k_m ≤ K ≤ k_M` (sampled at quadrature points for fields).
    pub k_bounds: (f64, f64),
}

impl MaterialModel {
    /// Builds a model with constant permeability and no gravity; the law
    /// constants are estimated over each law's admissible interval.
    pub fn new(alpha: f64, mu: f64, b_law: NonlinearLaw, h_law: NonlinearLaw, k: f64, nu_f: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Input(format!("shear modulus must be positive, got {mu}")));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Permeability { value: k, x: f64::NAN, y: f64::NAN });
        }
        if !(nu_f > 0.0) || !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::Input("viscosity must be positive and alpha non-negative".into()));
        }
        let constants = Self::law_constants(&b_law, &h_law)?;
        Ok(MaterialModel {
            alpha,
            mu,
            b_law,
            h_law,
            permeability: Permeability::Constant(k),
            nu_f,
            rho_f: 0.0,
            gravity: [0.0, 0.0],
            constants,
            k_bounds: (k, k),
        })
    }

    fn law_constants(b: &NonlinearLaw, h: &NonlinearLaw) -> Result<LawConstants> {
        let bounds = |law: &NonlinearLaw| -> Result<(f64, f64)> {
            match law.linear_slope() {
                Some(s) => Ok((s, s)),
                None => estimate_constants(law, law.admissible, 2001),
            }
        };
        let (b_m, l_b) = bounds(b)?;
        let (h_m, l_h) = bounds(h)?;
        Ok(LawConstants { b_m, l_b, h_m, l_h })
    }

    /// Test problem 1 material: every coefficient equal to one.
    pub fn manufactured(case: LawCase) -> Result<Self> {
        let (b, h) = law_catalog(case, 1.0, 1.0);
        MaterialModel::new(1.0, 1.0, b, h, 1.0, 1.0)
    }

    pub fn with_permeability(mut self, k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Permeability { value: k, x: f64::NAN, y: f64::NAN });
        }
        self.permeability = Permeability::Constant(k);
        self.k_bounds = (k, k);
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Re-estimates the law constants over the given pressure and
    /// volumetric-strain ranges.
    pub fn with_constants_on(mut self, p_range: (f64, f64), s_range: (f64, f64)) -> Result<Self> {
        self.constants = self.constants_on(p_range, s_range)?;
        self.b_law.admissible = p_range;
        self.h_law.admissible = s_range;
        Ok(self)
    }

    pub fn constants_on(&self, p_range: (f64, f64), s_range: (f64, f64)) -> Result<LawConstants> {
        let b = match self.b_law.linear_slope() {
            Some(s) => (s, s),
            None => estimate_constants(&self.b_law, p_range, 2001)?,
        };
        let h = match self.h_law.linear_slope() {
            Some(s) => (s, s),
            None => estimate_constants(&self.h_law, s_range, 2001)?,
        };
        Ok(LawConstants { b_m: b.0, l_b: b.1, h_m: h.0, l_h: h.1 })
    }

    pub fn mobility(&self, x: Point) -> f64 {
        self.permeability.at(x) / self.nu_f
    }
}

pub type ScalarField = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point, f64) -> [f64; 2] + Send + Sync>;

fn zero_scalar() -> ScalarField {
    Arc::new(|_, _| 0.0)
}

fn zero_vector() -> VectorField {
    Arc::new(|_, _| [0.0, 0.0])
}

#[derive(Clone)]
pub enum MechanicsBc {
    /// Both displacement components prescribed.
    Displacement(VectorField),
    /// Normal component fixed to zero, tangential traction free.
    Roller,
    /// Traction free.
    Free,
    /// Normal component shared by every vertex of the side (rigid plate),
    /// with a resultant force pushing inward; tangential traction free.
    RigidPlate { force: f64 },
}

#[derive(Clone)]
pub enum FlowBc {
    /// Prescribed normal flux `q·n`.
    Flux(ScalarField),
    /// Prescribed pressure (natural in the mixed form).
    Pressure(ScalarField),
}

#[derive(Clone)]
pub struct SideConditions {
    pub mechanics: MechanicsBc,
    pub flow: FlowBc,
}

#[derive(Clone)]
pub struct ExactSolution {
    pub p: ScalarField,
    pub q: VectorField,
    pub u: VectorField,
    pub div_u: ScalarField,
}

#[derive(Clone)]
pub struct ProblemDefinition {
    pub name: String,
    pub origin: Point,
    pub extent: Point,
    pub final_time: f64,
    /// Indexed by `Side::code()`.
    pub sides: [SideConditions; 4],
    pub u0: VectorField,
    pub p0: ScalarField,
    pub q0: VectorField,
    pub body_force: VectorField,
    pub source: ScalarField,
    pub exact: Option<ExactSolution>,
    /// Whether the loads vanish identically (skips quadrature).
    pub zero_loads: bool,
}

impl ProblemDefinition {
    pub fn side(&self, side: Side) -> &SideConditions {
        &self.sides[side.code() as usize]
    }
}

impl fmt::Debug for ProblemDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemDefinition")
            .field("name", &self.name)
            .field("origin", &self.origin)
            .field("extent", &self.extent)
            .field("final_time", &self.final_time)
            .finish_non_exhaustive()
    }
}

// φ = x(1−x)y(1−y) and the derivatives the manufactured data needs.
struct Bubble {
    phi: f64,
    phi_x: f64,
    phi_y: f64,
    phi_xx: f64,
    phi_yy: f64,
    phi_xy: f64,
}

impl Bubble {
    fn at([x, y]: Point) -> Self {
        let (gx, gy) = (x * (1.0 - x), y * (1.0 - y));
        let (dx, dy) = (1.0 - 2.0 * x, 1.0 - 2.0 * y);
        Bubble { phi: gx * gy, phi_x: dx * gy, phi_y: gx * dy, phi_xx: -2.0 * gy, phi_yy: -2.0 * gx, phi_xy: dx * dy }
    }

    fn psi(&self) -> f64 {
        self.phi_x + self.phi_y
    }
}

/// Unit square, `T = 1`, with data manufactured from
/// `p = u₁ = u₂ = t·x(1−x)y(1−y)` and `q = −(K/ν_f)∇p`.
///
/// Requires a constant permeability (the flux source uses `div q = −(K/ν_f)Δp`).
pub fn manufactured_problem(mat: &MaterialModel) -> Result<ProblemDefinition> {
    let k = match mat.permeability {
        Permeability::Constant(k) => k,
        Permeability::Field(_) => return Err(Error::Input("the manufactured problem needs constant permeability".into())),
    };
    let mob = k / mat.nu_f;
    let (alpha, mu) = (mat.alpha, mat.mu);
    let b = mat.b_law.clone();
    let h = mat.h_law.clone();

    let source: ScalarField = Arc::new(move |x, t| {
        let f = Bubble::at(x);
        // ∂t b(tφ) = b′(tφ)·φ, taken as 0 where φ vanishes (b′ may blow up there)
        let storage = if f.phi == 0.0 { 0.0 } else { b.deriv(t * f.phi) * f.phi };
        storage + alpha * f.psi() - mob * t * (f.phi_xx + f.phi_yy)
    });
    let body_force: VectorField = Arc::new(move |x, t| {
        let f = Bubble::at(x);
        let lap = f.phi_xx + f.phi_yy;
        let psi_x = f.phi_xx + f.phi_xy;
        let psi_y = f.phi_xy + f.phi_yy;
        let hp = h.deriv(t * f.psi());
        let comp = |dpsi: f64, dphi: f64| -mu * t * (lap + dpsi) - hp * t * dpsi + alpha * t * dphi;
        [comp(psi_x, f.phi_x), comp(psi_y, f.phi_y)]
    });
    let exact = ExactSolution {
        p: Arc::new(|x, t| t * Bubble::at(x).phi),
        q: Arc::new(move |x, t| {
            let f = Bubble::at(x);
            [-mob * t * f.phi_x, -mob * t * f.phi_y]
        }),
        u: Arc::new(|x, t| {
            let v = t * Bubble::at(x).phi;
            [v, v]
        }),
        div_u: Arc::new(|x, t| t * Bubble::at(x).psi()),
    };
    let clamp = || SideConditions { mechanics: MechanicsBc::Displacement(zero_vector()), flow: FlowBc::Pressure(zero_scalar()) };
    Ok(ProblemDefinition {
        name: "manufactured".into(),
        origin: [0.0, 0.0],
        extent: [1.0, 1.0],
        final_time: 1.0,
        sides: [clamp(), clamp(), clamp(), clamp()],
        u0: zero_vector(),
        p0: zero_scalar(),
        q0: zero_vector(),
        body_force,
        source,
        exact: Some(exact),
        zero_loads: false,
    })
}

/// Geometry, material, and loading of the quarter-domain Mandel problem (SI units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MandelConfig {
    pub a: f64,
    pub b: f64,
    /// Plate load per unit depth on the quarter domain (N/m).
    pub force: f64,
    pub permeability: f64,
    pub viscosity: f64,
    pub alpha: f64,
    pub m_biot: f64,
    pub mu: f64,
    pub lambda: f64,
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub total_time: f64,
}

/// One darcy in m².
pub const DARCY: f64 = 9.869233e-13;
/// One centipoise in Pa·s.
pub const CENTIPOISE: f64 = 1e-3;

impl Default for MandelConfig {
    fn default() -> Self {
        MandelConfig {
            a: 100.0,
            b: 10.0,
            force: 1e4,
            permeability: 100.0 * DARCY,
            viscosity: 10.0 * CENTIPOISE,
            alpha: 1.0,
            m_biot: 1.65e10,
            mu: 2.475e9,
            lambda: 1.65e9,
            nx: 40,
            ny: 40,
            dt: 1.0,
            total_time: 500.0,
        }
    }
}

impl MandelConfig {
    pub fn drained_poisson(&self) -> f64 {
        self.lambda / (2.0 * (self.lambda + self.mu))
    }

    pub fn drained_bulk(&self) -> f64 {
        self.lambda + 2.0 * self.mu / 3.0
    }

    pub fn skempton(&self) -> f64 {
        self.alpha * self.m_biot / (self.drained_bulk() + self.alpha * self.alpha * self.m_biot)
    }

    pub fn undrained_poisson(&self) -> f64 {
        let nu = self.drained_poisson();
        let ab = self.alpha * self.skempton() * (1.0 - 2.0 * nu);
        (3.0 * nu + ab) / (3.0 - ab)
    }

    pub fn initial_pressure(&self) -> f64 {
        self.force * self.skempton() * (1.0 + self.undrained_poisson()) / (3.0 * self.a)
    }

    /// Consolidation coefficient `c = κ·M·(K_dr + 4μ/3)/(K_dr + 4μ/3 + α²M)` with mobility κ = K/μ_f.
    pub fn consolidation_coefficient(&self) -> f64 {
        let m_dr = self.drained_bulk() + 4.0 * self.mu / 3.0;
        self.permeability / self.viscosity * self.m_biot * m_dr / (m_dr + self.alpha * self.alpha * self.m_biot)
    }

    pub fn steps(&self) -> usize {
        (self.total_time / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a", self.a),
            ("b", self.b),
            ("force", self.force),
            ("permeability", self.permeability),
            ("viscosity", self.viscosity),
            ("m_biot", self.m_biot),
            ("mu", self.mu),
            ("dt", self.dt),
            ("total_time", self.total_time),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("mandel.{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("mandel.alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Config("mandel grid counts must be at least 1".into()));
        }
        let nu = self.drained_poisson();
        if !(nu > 0.0 && nu < 0.5) {
            return Err(Error::Config(format!("drained Poisson ratio {nu} outside (0, 1/2)")));
        }
        let b = self.skempton();
        if !(b > 0.0 && b <= 1.0) {
            return Err(Error::Config(format!("Skempton coefficient {b} outside (0, 1]")));
        }
        let nu_u = self.undrained_poisson();
        if !(nu_u >= nu && nu_u < 0.5) {
            return Err(Error::Config(format!("undrained Poisson ratio {nu_u} outside [{nu}, 1/2)")));
        }
        let steps = self.total_time / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::Config("mandel.total_time must be a multiple of dt".into()));
        }
        Ok(())
    }

    /// Material for a Mandel run; `case` selects the storage/stress laws.
    pub fn material(&self, case: LawCase) -> Result<MaterialModel> {
        if !matches!(case, LawCase::Linear | LawCase::T2c1 | LawCase::T2c2 | LawCase::T2c3) {
            return Err(Error::Config(format!("law case {case} is not a Mandel case (use linear, t2c1, t2c2, t2c3)")));
        }
        let (b, h) = law_catalog(case, self.m_biot, self.lambda);
        // certify constants over the physically reachable magnitudes
        let p0 = self.initial_pressure();
        let s0 = self.force / self.mu;
        let b = b.with_admissible(-2.0 * p0, 2.0 * p0);
        let h = h.with_admissible(-2.0 * s0, 2.0 * s0);
        MaterialModel::new(self.alpha, self.mu, b, h, self.permeability, self.viscosity)
    }
}

/// Quarter-domain Mandel problem `[0,a]×[0,b]` with the rigid top plate.
pub fn mandel_problem(mat: &MaterialModel, cfg: &MandelConfig) -> Result<ProblemDefinition> {
    cfg.validate()?;
    let p0 = cfg.initial_pressure();
    let nu_u = cfg.undrained_poisson();
    let (f, a, b, mu) = (cfg.force, cfg.a, cfg.b, mat.mu);
    let no_flow = || FlowBc::Flux(zero_scalar());
    let sides = [
        // Left, Right, Bottom, Top (Side::code order)
        SideConditions { mechanics: MechanicsBc::Roller, flow: no_flow() },
        SideConditions { mechanics: MechanicsBc::Free, flow: FlowBc::Pressure(zero_scalar()) },
        SideConditions { mechanics: MechanicsBc::Roller, flow: no_flow() },
        SideConditions { mechanics: MechanicsBc::RigidPlate { force: f }, flow: no_flow() },
    ];
    debug_assert_eq!(Side::Left.code(), 0);
    debug_assert_eq!(Side::Top.code(), 3);
    Ok(ProblemDefinition {
        name: "mandel".into(),
        origin: [0.0, 0.0],
        extent: [a, b],
        final_time: cfg.total_time,
        sides,
        // undrained response to the plate load; dimensionally consistent form
        u0: Arc::new(move |[x, y], _| [f * nu_u * x / (2.0 * mu * a), -f * (1.0 - nu_u) * y / (2.0 * mu * a)]),
        p0: Arc::new(move |_, _| p0),
        q0: zero_vector(),
        body_force: zero_vector(),
        source: zero_scalar(),
        exact: None,
        zero_loads: true,
    })
}
