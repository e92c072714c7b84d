//! Substitutes the exact manufactured fields into the strong equations, with
//! derivatives taken by forward-mode automatic differentiation (nested duals),
//! and checks the generated body force and source close the residuals.

use std::ops::{Add, Div, Mul, Neg, Sub};

use porobiot::physics::{manufactured_problem, LawCase, MaterialModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

trait Scalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self> {
    fn cst(v: f64) -> Self;
    fn re(self) -> f64;
    fn exp(self) -> Self;
    // sign(x)|x|^k
    fn odd_pow(self, k: f64) -> Self;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn re(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn odd_pow(self, k: f64) -> Self {
        self.signum() * self.abs().powf(k)
    }
}

#[derive(Clone, Copy, Debug)]
struct Dual<T> {
    v: T,
    d: T,
}

impl<T: Scalar> Dual<T> {
    fn var(v: T) -> Self {
        Dual { v, d: T::cst(1.0) }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}
impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}
impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}
impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        Dual { v: self.v / o.v, d: (self.d * o.v - self.v * o.d) / (o.v * o.v) }
    }
}
impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { v: -self.v, d: -self.d }
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn cst(v: f64) -> Self {
        Dual { v: T::cst(v), d: T::cst(0.0) }
    }
    fn re(self) -> f64 {
        self.v.re()
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual { v: e, d: self.d * e }
    }
    fn odd_pow(self, k: f64) -> Self {
        // d/dx sign(x)|x|^k = k|x|^{k-1}; evaluated as k·sign(x)|x|^{k-1}·sign(x)
        let inner = self.v.odd_pow(k - 1.0);
        let sgn = T::cst(self.v.re().signum());
        Dual { v: self.v.odd_pow(k), d: self.d * T::cst(k) * inner * sgn }
    }
}

fn b_law<S: Scalar>(case: LawCase, p: S) -> S {
    match case {
        LawCase::Linear => p,
        LawCase::T1c1 => p.exp(),
        LawCase::T1c2 | LawCase::T1c4 => p * p * p,
        LawCase::T1c3 | LawCase::T1c5 => p.odd_pow(1.0 / 3.0),
        _ => unreachable!(),
    }
}

fn h_law<S: Scalar>(case: LawCase, s: S) -> S {
    match case {
        LawCase::Linear => s,
        LawCase::T1c1 | LawCase::T1c2 | LawCase::T1c3 => s * s * s,
        LawCase::T1c4 | LawCase::T1c5 => s.odd_pow(5.0 / 3.0),
        _ => unreachable!(),
    }
}

fn phi<S: Scalar>(x: S, y: S) -> S {
    let one = S::cst(1.0);
    x * (one - x) * y * (one - y)
}

// first derivatives of u = (tφ, tφ) as functions of (x, y) at fixed t
fn grad_u<S: Scalar>(x: S, y: S, t: S) -> [[S; 2]; 2] {
    let dx = {
        let d = phi(Dual::var(x), Dual { v: y, d: S::cst(0.0) });
        d.d * t
    };
    let dy = {
        let d = phi(Dual { v: x, d: S::cst(0.0) }, Dual::var(y));
        d.d * t
    };
    [[dx, dy], [dx, dy]]
}

fn stress<S: Scalar>(case: LawCase, mu: f64, x: S, y: S, t: S) -> [[S; 2]; 2] {
    let g = grad_u(x, y, t);
    let div = g[0][0] + g[1][1];
    let hs = h_law(case, div);
    let m = S::cst(mu);
    [
        [m * (g[0][0] + g[0][0]) + hs, m * (g[0][1] + g[1][0])],
        [m * (g[1][0] + g[0][1]), m * (g[1][1] + g[1][1]) + hs],
    ]
}

#[test]
fn generated_data_closes_the_strong_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in [LawCase::Linear, LawCase::T1c1, LawCase::T1c2, LawCase::T1c3, LawCase::T1c4, LawCase::T1c5] {
        let (alpha, mu, k) = (0.7, 1.3, 2.0);
        let mat = MaterialModel::manufactured(case).unwrap().with_alpha(alpha);
        let mat = MaterialModel { mu, ..mat }.with_permeability(k).unwrap();
        let prob = manufactured_problem(&mat).unwrap();
        let mob = k / mat.nu_f;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let (x, y, t): (f64, f64, f64) = (rng.random_range(0.02..0.98), rng.random_range(0.02..0.98), rng.random_range(0.05..1.0));
            // momentum: −∂_j σ_ij + α ∂_i p − f_i
            let sxx = stress(case, mu, Dual::var(x), Dual::cst(y), Dual::cst(t));
            let syy = stress(case, mu, Dual::cst(x), Dual::var(y), Dual::cst(t));
            let px = phi(Dual::var(x), Dual::cst(y)).d * t;
            let py = phi(Dual::cst(x), Dual::var(y)).d * t;
            let f = (prob.body_force)([x, y], t);
            let r0 = -(sxx[0][0].d + syy[0][1].d) + alpha * px - f[0];
            let r1 = -(sxx[1][0].d + syy[1][1].d) + alpha * py - f[1];
            // mass: ∂_t[b(p) + α div u] + div q − S_f with q = −(K/ν_f)∇p
            let tt = Dual::var(t);
            let storage = b_law(case, Dual::cst(phi(x, y)) * tt);
            let g = grad_u(Dual::cst(x), Dual::cst(y), tt);
            let div_rate = (g[0][0] + g[1][1]).d;
            let qx_x = phi(Dual::var(Dual::var(x)), Dual::<Dual<f64>>::cst(y)).d.d * (-mob * t);
            let qy_y = phi(Dual::<Dual<f64>>::cst(x), Dual::var(Dual::var(y))).d.d * (-mob * t);
            let r2 = storage.d + alpha * div_rate + qx_x + qy_y - (prob.source)([x, y], t);
            worst = worst.max(r0.abs()).max(r1.abs()).max(r2.abs());
        }
        assert!(worst < 1e-10, "{case}: worst residual {worst:e}");
    }
}
