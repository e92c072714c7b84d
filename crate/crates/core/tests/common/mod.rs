//! Checks shared by the invariant and acceptance suites.
#![allow(dead_code)]

use porobiot::assembly::BiotOperators;
use porobiot::bench::{logspace, sweep_l, ProblemSpec};
use porobiot::fem::{p0_project, quadrature, rt0_interpolate};
use porobiot::linalg::CsrMatrix;
use porobiot::mesh::{generate_rect_mesh, Mesh};
use porobiot::physics::{LawCase, MaterialModel, NonlinearLaw};
use porobiot::schemes::{write_trace_csv, SchemeConfig, SchemeKind};

pub type P = [f64; 2];

pub fn material(mu: f64, k: f64, nu_f: f64) -> MaterialModel {
    MaterialModel::new(0.8, mu, NonlinearLaw::linear("b", 0.5), NonlinearLaw::linear("h", 1.5), k, nu_f).unwrap()
}

pub fn barycentric_gradients(p: [P; 3]) -> (f64, [P; 3]) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let g = |a: usize| {
        let (j, k) = ((a + 1) % 3, (a + 2) % 3);
        [(p[j][1] - p[k][1]) / det, (p[k][0] - p[j][0]) / det]
    };
    (0.5 * det.abs(), [g(0), g(1), g(2)])
}

/// Dense matrices built directly from the element definitions.
pub struct Oracle {
    pub a_e: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub b_up: Vec<Vec<f64>>,
    pub m_q: Vec<Vec<f64>>,
    pub b_qp: Vec<Vec<f64>>,
}

pub fn oracle(mesh: &Mesh, mu: f64, k: f64, nu_f: f64) -> Oracle {
    let (nu, nq, np) = (2 * mesh.vertices.len(), mesh.edges.len(), mesh.cells.len());
    let z = |r: usize, c: usize| vec![vec![0.0; c]; r];
    let mut o = Oracle { a_e: z(nu, nu), d: z(nu, nu), b_up: z(nu, np), m_q: z(nq, nq), b_qp: z(np, nq) };
    for (c, cell) in mesh.cells.iter().enumerate() {
        let pts = [mesh.vertices[cell[0]], mesh.vertices[cell[1]], mesh.vertices[cell[2]]];
        let (area, grads) = barycentric_gradients(pts);
        // displacement basis λ_a e_i has gradient e_i ⊗ ∇λ_a
        let strain = |a: usize, i: usize| {
            let mut g = [[0.0; 2]; 2];
            g[i] = grads[a];
            [[g[0][0], 0.5 * (g[0][1] + g[1][0])], [0.5 * (g[0][1] + g[1][0]), g[1][1]]]
        };
        for a in 0..3 {
            for i in 0..2 {
                let r = 2 * cell[a] + i;
                let ea = strain(a, i);
                o.b_up[r][c] += area * grads[a][i];
                for b in 0..3 {
                    for j in 0..2 {
                        let s = 2 * cell[b] + j;
                        let eb = strain(b, j);
                        let dd: f64 = (0..2).map(|x| (0..2).map(|y| ea[x][y] * eb[x][y]).sum::<f64>()).sum();
                        o.a_e[r][s] += 2.0 * mu * area * dd;
                        o.d[r][s] += area * grads[a][i] * grads[b][j];
                    }
                }
            }
        }
        // flux basis of the edge opposite x_o: s |e| / (2|K|) (x − x_o), s = ±1 from the global normal
        let centroid = [(pts[0][0] + pts[1][0] + pts[2][0]) / 3.0, (pts[0][1] + pts[1][1] + pts[2][1]) / 3.0];
        let mut local = Vec::new();
        for o_idx in 0..3 {
            let (va, vb) = (cell[(o_idx + 1) % 3], cell[(o_idx + 2) % 3]);
            let key = [va.min(vb), va.max(vb)];
            let e = mesh.edges.iter().position(|x| *x == key).unwrap();
            let (x0, x1) = (mesh.vertices[key[0]], mesh.vertices[key[1]]);
            let len = ((x1[0] - x0[0]).powi(2) + (x1[1] - x0[1]).powi(2)).sqrt();
            let n = [(x1[1] - x0[1]) / len, -(x1[0] - x0[0]) / len];
            let mid = [0.5 * (x0[0] + x1[0]), 0.5 * (x0[1] + x1[1])];
            let s = (n[0] * (mid[0] - centroid[0]) + n[1] * (mid[1] - centroid[1])).signum();
            local.push((e, s * len / (2.0 * area), pts[o_idx]));
            o.b_qp[c][e] += s * len;
        }
        // edge-midpoint rule is exact for the quadratic integrand
        let mids = [0, 1, 2].map(|i| {
            let (a, b) = (pts[(i + 1) % 3], pts[(i + 2) % 3]);
            [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
        });
        for &(ei, si, xi) in &local {
            for &(ej, sj, xj) in &local {
                let v: f64 = mids
                    .iter()
                    .map(|m| si * sj * ((m[0] - xi[0]) * (m[0] - xj[0]) + (m[1] - xi[1]) * (m[1] - xj[1])))
                    .sum();
                o.m_q[ei][ej] += nu_f / k * area / 3.0 * v;
            }
        }
    }
    o
}

pub fn max_diff(a: &CsrMatrix, dense: &[Vec<f64>]) -> f64 {
    let mut m: f64 = 0.0;
    for (i, row) in dense.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m = m.max((a.get(i, j) - v).abs());
        }
    }
    m
}


/// Largest entry deviation between assembled operators and the element oracle.
pub fn operator_oracle_error(origin: P, extent: P, nx: usize, ny: usize) -> f64 {
    let mesh = generate_rect_mesh(origin, extent, nx, ny).unwrap();
    let (mu, k, nu_f) = (1.3, 2.0, 1.5);
    let ops = BiotOperators::assemble(&mesh, &material(mu, k, nu_f)).unwrap();
    let o = oracle(&mesh, mu, k, nu_f);
    let mut err = [
        max_diff(&ops.a_e, &o.a_e),
        max_diff(&ops.d, &o.d),
        max_diff(&ops.b_up, &o.b_up),
        max_diff(&ops.m_q, &o.m_q),
        max_diff(&ops.b_qp, &o.b_qp),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    for c in 0..mesh.n_cells() {
        let (area, _) = barycentric_gradients([0, 1, 2].map(|i| mesh.vertices[mesh.cells[c][i]]));
        err = err.max((ops.m_p.get(c, c) - area).abs());
    }
    err
}

/// RT0 interpolation of `a + c·x` evaluated inside every cell, and the
/// divergence moments `B_qp q = 2c|K|`.
pub fn rt0_exactness_error() -> f64 {
    let mesh = generate_rect_mesh([0.0, 0.0], [1.5, 1.0], 3, 2).unwrap();
    let ops = BiotOperators::assemble(&mesh, &material(1.0, 1.0, 1.0)).unwrap();
    let (a, c) = ([0.3, -1.1], 0.7);
    let field = move |x: P| [a[0] + c * x[0], a[1] + c * x[1]];
    let q = rt0_interpolate(&mesh, field);
    let mut err: f64 = 0.0;
    for cell in 0..mesh.n_cells() {
        for bary in [[1.0 / 3.0; 3], [0.6, 0.3, 0.1], [0.05, 0.05, 0.9]] {
            let x = mesh.map_point(cell, bary);
            let v = q.eval(&mesh, cell, x).unwrap();
            let e = field(x);
            err = err.max((v[0] - e[0]).abs()).max((v[1] - e[1]).abs());
        }
    }
    for (cell, d) in ops.b_qp.mul_vec(&q.coeffs).iter().enumerate() {
        err = err.max((d - 2.0 * c * ops.areas[cell]).abs());
    }
    err
}

/// P0 projection of an affine function equals its centroid value.
pub fn p0_exactness_error() -> f64 {
    let mesh = generate_rect_mesh([0.0, 0.0], [1.0, 2.0], 2, 2).unwrap();
    let rule = quadrature(4).unwrap();
    let f = p0_project(&mesh, &rule, |x| 2.0 - 3.0 * x[0] + 0.5 * x[1]);
    let one = p0_project(&mesh, &rule, |_| 1.0);
    (0..mesh.n_cells())
        .map(|c| {
            let m = mesh.centroid(c);
            (f.coeffs[c] - (2.0 - 3.0 * m[0] + 0.5 * m[1])).abs().max((one.coeffs[c] - 1.0).abs())
        })
        .fold(0.0, f64::max)
}

/// `(⟨ε(v):ε(v)⟩, ½‖div v‖²)` for nodal values `v` on an `n×n` mesh.
pub fn korn_pair(n: usize, v: impl Fn(usize) -> f64) -> (f64, f64) {
    let mesh = generate_rect_mesh([0.0, 0.0], [1.0, 1.3], n, n).unwrap();
    let ops = BiotOperators::assemble(&mesh, &material(1.0, 1.0, 1.0)).unwrap();
    let v: Vec<f64> = (0..ops.n_u()).map(v).collect();
    // a_e carries the factor 2μ with μ = 1
    (0.5 * ops.a_e.bilinear(&v, &v), 0.5 * ops.d.bilinear(&v, &v))
}

/// Sweep CSV and deterministic trace CSV bytes of one small problem.
pub fn reproducible_outputs() -> (Vec<u8>, Vec<u8>) {
    let setup = ProblemSpec::manufactured(LawCase::T1c1, 6, 0.25).build().unwrap();
    let grid = logspace(-1.0, 1.0, 3);
    let mut sweep = Vec::new();
    sweep_l(&setup, &SchemeConfig::new(SchemeKind::Splitting, 1.0, 1.0), &grid, &grid).unwrap().write_csv(&mut sweep).unwrap();
    let run = setup.context(SchemeConfig::new(SchemeKind::Monolithic, 1.0, 0.1)).unwrap().time_march(&setup.initial, 2).unwrap();
    let refs: Vec<_> = run.iter().enumerate().map(|(i, (_, t))| (i + 1, t)).collect();
    let mut trace = Vec::new();
    write_trace_csv(&mut trace, &refs, true).unwrap();
    (sweep, trace)
}
