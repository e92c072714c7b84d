//! Sparse operators, load vectors, and essential boundary conditions.
//!
//! Full-space vectors use the natural dof numbering of each space (interleaved
//! `2·vertex + component` for displacement, edges for flux, cells for
//! pressure). Essential conditions are removed through a [`Reduction`], which
//! maps every full dof to a reduced unknown or a fixed value; tied dofs share
//! one reduced unknown.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::fem::{local_mass, quadrature, rt0_basis_unchecked, Space};
use crate::linalg::CsrMatrix;
use crate::mesh::{Mesh, Point, Side};
use crate::physics::{FlowBc, MaterialModel, MechanicsBc, ProblemDefinition};

/// Every bilinear form of the discrete problem plus the plain mass matrices
/// used for norms.
#[derive(Debug, Clone)]
pub struct BiotOperators {
    /// `2μ⟨ε(u):ε(z)⟩`
    pub a_e: CsrMatrix,
    /// `⟨div u, div z⟩`
    pub d: CsrMatrix,
    /// `⟨p, div z⟩`, displacement rows by pressure columns
    pub b_up: CsrMatrix,
    /// `ν_f⟨K⁻¹q, v⟩`
    pub m_q: CsrMatrix,
    /// `⟨div q, w⟩`, pressure rows by flux columns
    pub b_qp: CsrMatrix,
    /// `⟨p, w⟩` (diagonal)
    pub m_p: CsrMatrix,
    /// Cellwise divergence of a displacement field.
    pub div: CsrMatrix,
    pub mass_u: CsrMatrix,
    pub mass_q: CsrMatrix,
    pub areas: Vec<f64>,
    pub k_bounds: (f64, f64),
}

impl BiotOperators {
    pub fn assemble(mesh: &Mesh, mat: &MaterialModel) -> Result<Self> {
        let (a_e, d, b_up) = assemble_mechanics(mesh, mat)?;
        let (m_q, b_qp, m_p) = assemble_flow(mesh, mat)?;
        let div = divergence_operator(mesh)?;
        let areas = (0..mesh.n_cells()).map(|c| m_p.get(c, c)).collect();
        let k_bounds = permeability_bounds(mesh, mat)?;
        Ok(BiotOperators {
            a_e,
            d,
            b_up,
            m_q,
            b_qp,
            m_p,
            div,
            mass_u: assemble_mass(mesh, Space::P1Vector)?,
            mass_q: assemble_mass(mesh, Space::Rt0)?,
            areas,
            k_bounds,
        })
    }

    pub fn n_u(&self) -> usize {
        self.a_e.nrows()
    }

    pub fn n_q(&self) -> usize {
        self.m_q.nrows()
    }

    pub fn n_p(&self) -> usize {
        self.m_p.nrows()
    }

    pub fn cell_divergence(&self, u: &[f64]) -> Vec<f64> {
        self.div.mul_vec(u)
    }
}

/// `(A_e, D, B_up)`: elasticity, div–div, and pressure–displacement coupling.
pub fn assemble_mechanics(mesh: &Mesh, mat: &MaterialModel) -> Result<(CsrMatrix, CsrMatrix, CsrMatrix)> {
    let n_u = 2 * mesh.n_vertices();
    let mut ae = Vec::with_capacity(36 * mesh.n_cells());
    let mut dd = Vec::with_capacity(36 * mesh.n_cells());
    let mut bu = Vec::with_capacity(6 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let g = mesh.cell_geometry(c)?;
        let dofs = p1_dofs(mesh, c);
        for a in 0..6 {
            let (va, ca) = (a / 2, a % 2);
            let ga = g.grads[va];
            bu.push((dofs[a], c, g.area * ga[ca]));
            for b in 0..6 {
                let (vb, cb) = (b / 2, b % 2);
                let gb = g.grads[vb];
                // 2μ ε(φ_a):ε(φ_b) = μ(δ_ab g_a·g_b + g_a[cb]·g_b[ca]) for φ = λ e_c
                let diag = if ca == cb { ga[0] * gb[0] + ga[1] * gb[1] } else { 0.0 };
                ae.push((dofs[a], dofs[b], mat.mu * g.area * (diag + ga[cb] * gb[ca])));
                dd.push((dofs[a], dofs[b], g.area * ga[ca] * gb[cb]));
            }
        }
    }
    Ok((
        CsrMatrix::from_triplets(n_u, n_u, &ae),
        CsrMatrix::from_triplets(n_u, n_u, &dd),
        CsrMatrix::from_triplets(n_u, mesh.n_cells(), &bu),
    ))
}

/// `(M_q, B_qp, M_p)`: weighted flux mass, flux divergence, pressure mass.
pub fn assemble_flow(mesh: &Mesh, mat: &MaterialModel) -> Result<(CsrMatrix, CsrMatrix, CsrMatrix)> {
    let rule = quadrature(2)?;
    let (n_q, n_p) = (mesh.n_edges(), mesh.n_cells());
    let mut mq = Vec::with_capacity(9 * n_p);
    let mut bq = Vec::with_capacity(3 * n_p);
    let mut mp = Vec::with_capacity(n_p);
    for c in 0..n_p {
        let g = mesh.cell_geometry(c)?;
        let mut local = [[0.0; 3]; 3];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let x = mesh.map_point(c, *bary);
            let k = checked_permeability(mat, x)?;
            let phi = rt0_basis_unchecked(mesh, c, x);
            let s = w * g.area * mat.nu_f / k;
            for i in 0..3 {
                for j in 0..3 {
                    local[i][j] += s * (phi[i].0[0] * phi[j].0[0] + phi[i].0[1] * phi[j].0[1]);
                }
            }
        }
        for i in 0..3 {
            let (ei, si) = mesh.cell_edges[c][i];
            bq.push((c, ei, si * mesh.edge_length(ei)));
            for j in 0..3 {
                mq.push((ei, mesh.cell_edges[c][j].0, local[i][j]));
            }
        }
        mp.push((c, c, g.area));
    }
    Ok((
        CsrMatrix::from_triplets(n_q, n_q, &mq),
        CsrMatrix::from_triplets(n_p, n_q, &bq),
        CsrMatrix::from_triplets(n_p, n_p, &mp),
    ))
}

fn checked_permeability(mat: &MaterialModel, x: Point) -> Result<f64> {
    let k = mat.permeability.at(x);
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Permeability { value: k, x: x[0], y: x[1] });
    }
    Ok(k)
}

/// Sampled `(k_m, k_M)` over all quadrature points.
pub fn permeability_bounds(mesh: &Mesh, mat: &MaterialModel) -> Result<(f64, f64)> {
    let rule = quadrature(2)?;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for c in 0..mesh.n_cells() {
        for bary in &rule.points {
            let k = checked_permeability(mat, mesh.map_point(c, *bary))?;
            lo = lo.min(k);
            hi = hi.max(k);
        }
    }
    Ok((lo, hi))
}

fn p1_dofs(mesh: &Mesh, cell: usize) -> [usize; 6] {
    let v = mesh.cells[cell];
    [2 * v[0], 2 * v[0] + 1, 2 * v[1], 2 * v[1] + 1, 2 * v[2], 2 * v[2] + 1]
}

fn divergence_operator(mesh: &Mesh) -> Result<CsrMatrix> {
    let mut trip = Vec::with_capacity(6 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let g = mesh.cell_geometry(c)?;
        for (a, dof) in p1_dofs(mesh, c).into_iter().enumerate() {
            trip.push((c, dof, g.grads[a / 2][a % 2]));
        }
    }
    Ok(CsrMatrix::from_triplets(mesh.n_cells(), 2 * mesh.n_vertices(), &trip))
}

/// Plain L² mass matrix of a space.
pub fn assemble_mass(mesh: &Mesh, space: Space) -> Result<CsrMatrix> {
    let k = space.local_dofs();
    let n = space.n_dofs(mesh);
    let mut trip = Vec::with_capacity(k * k * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let m = local_mass(mesh, space, c)?;
        let dofs: Vec<usize> = match space {
            Space::P1Vector => p1_dofs(mesh, c).to_vec(),
            Space::Rt0 => mesh.cell_edges[c].iter().map(|&(e, _)| e).collect(),
            Space::P0 => vec![c],
        };
        for i in 0..k {
            for j in 0..k {
                trip.push((dofs[i], dofs[j], m[i * k + j]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, &trip))
}

/// Non-linear terms `⟨b(p), w⟩` and `⟨h(div u), div z⟩`, exact because both
/// arguments are cellwise constant.
#[derive(Debug, Clone)]
pub struct NonlinearRhs {
    pub bp: Vec<f64>,
    pub hu: Vec<f64>,
    /// Cells whose pressure or divergence left the laws' admissible ranges.
    pub out_of_range: usize,
}

pub fn assemble_nonlinear_rhs(ops: &BiotOperators, mat: &MaterialModel, p: &[f64], u: &[f64]) -> NonlinearRhs {
    let div = ops.cell_divergence(u);
    let (plo, phi) = mat.b_law.admissible;
    let (slo, shi) = mat.h_law.admissible;
    let mut out_of_range = 0;
    let bp = p
        .iter()
        .zip(&ops.areas)
        .map(|(&pt, a)| {
            if pt < plo || pt > phi {
                out_of_range += 1;
            }
            mat.b_law.eval(pt) * a
        })
        .collect();
    let weighted: Vec<f64> = div
        .iter()
        .zip(&ops.areas)
        .map(|(&s, a)| {
            if s < slo || s > shi {
                out_of_range += 1;
            }
            mat.h_law.eval(s) * a
        })
        .collect();
    NonlinearRhs { bp, hu: ops.div.mul_transpose_vec(&weighted), out_of_range }
}

/// Full-space load vectors at time `t`.
#[derive(Debug, Clone)]
pub struct Loads {
    /// `⟨f, z⟩` plus the rigid-plate force.
    pub f: Vec<f64>,
    /// `⟨ρ_f g, v⟩ − ∫_Γ p̄ v·n` on pressure sides.
    pub g: Vec<f64>,
    /// `⟨S_f, w⟩` (not yet multiplied by τ).
    pub s: Vec<f64>,
}

pub fn assemble_loads(mesh: &Mesh, mat: &MaterialModel, problem: &ProblemDefinition, t: f64) -> Result<Loads> {
    let (n_u, n_q, n_p) = (2 * mesh.n_vertices(), mesh.n_edges(), mesh.n_cells());
    let mut f = vec![0.0; n_u];
    let mut g = vec![0.0; n_q];
    let mut s = vec![0.0; n_p];
    if !problem.zero_loads {
        let rule = quadrature(4)?;
        for c in 0..n_p {
            let area = mesh.cell_geometry(c)?.area;
            let dofs = p1_dofs(mesh, c);
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let x = mesh.map_point(c, *bary);
                let wa = w * area;
                let fx = (problem.body_force)(x, t);
                for a in 0..3 {
                    f[dofs[2 * a]] += wa * fx[0] * bary[a];
                    f[dofs[2 * a + 1]] += wa * fx[1] * bary[a];
                }
                s[c] += wa * (problem.source)(x, t);
            }
        }
    }
    if mat.rho_f != 0.0 && (mat.gravity[0] != 0.0 || mat.gravity[1] != 0.0) {
        let rule = quadrature(2)?;
        for c in 0..n_p {
            let area = mesh.cell_geometry(c)?.area;
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let phi = rt0_basis_unchecked(mesh, c, mesh.map_point(c, *bary));
                for i in 0..3 {
                    let e = mesh.cell_edges[c][i].0;
                    g[e] += w * area * mat.rho_f * (mat.gravity[0] * phi[i].0[0] + mat.gravity[1] * phi[i].0[1]);
                }
            }
        }
    }
    // Gauss–Legendre, 3 points on [0, 1]
    const EDGE_PTS: [(f64, f64); 3] = [
        (0.112_701_665_379_258_3, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.887_298_334_620_741_7, 5.0 / 18.0),
    ];
    for side in Side::ALL {
        let conds = problem.side(side);
        if let FlowBc::Pressure(pbar) = &conds.flow {
            for e in mesh.boundary_edges(side) {
                let [v0, v1] = mesh.edges[e];
                let (x0, x1) = (mesh.vertices[v0], mesh.vertices[v1]);
                let len = mesh.edge_length(e);
                let integral: f64 = EDGE_PTS
                    .iter()
                    .map(|&(s, w)| w * pbar([x0[0] + s * (x1[0] - x0[0]), x0[1] + s * (x1[1] - x0[1])], t))
                    .sum::<f64>()
                    * len;
                g[e] -= outward_sign(mesh, e, side) * integral;
            }
        }
        if let MechanicsBc::RigidPlate { force } = conds.mechanics {
            let n = side.outward_normal();
            let comp = normal_component(side);
            if let Some(&v) = mesh.boundary_vertices(side).first() {
                // the whole plate force acts on the shared unknown
                f[2 * v + comp] -= force * n[comp];
            }
        }
    }
    Ok(Loads { f, g, s })
}

fn outward_sign(mesh: &Mesh, edge: usize, side: Side) -> f64 {
    let n = mesh.edge_normal(edge);
    let o = side.outward_normal();
    (n[0] * o[0] + n[1] * o[1]).signum()
}

fn normal_component(side: Side) -> usize {
    match side {
        Side::Left | Side::Right => 0,
        Side::Bottom | Side::Top => 1,
    }
}

/// Map from full dofs to reduced unknowns or fixed values.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    map: Vec<Option<usize>>,
    fixed: Vec<f64>,
    n_reduced: usize,
}

impl Reduction {
    pub fn identity(n: usize) -> Self {
        Reduction { map: (0..n).map(Some).collect(), fixed: vec![0.0; n], n_reduced: n }
    }

    /// `fixed`: dof → value; `ties`: groups of dofs sharing one unknown.
    pub fn new(n: usize, fixed: &HashMap<usize, f64>, ties: &[Vec<usize>]) -> Result<Self> {
        let mut group = vec![usize::MAX; n];
        for (gi, g) in ties.iter().enumerate() {
            for &d in g {
                if group[d] != usize::MAX && group[d] != gi {
                    return Err(Error::Config(format!("dof {d} is tied in two groups")));
                }
                if fixed.contains_key(&d) {
                    return Err(Error::Config(format!("dof {d} is both tied and fixed")));
                }
                group[d] = gi;
            }
        }
        let mut map = vec![None; n];
        let mut values = vec![0.0; n];
        let mut group_index: Vec<Option<usize>> = vec![None; ties.len()];
        let mut next = 0;
        for d in 0..n {
            if let Some(&v) = fixed.get(&d) {
                values[d] = v;
            } else if group[d] != usize::MAX {
                let gi = group[d];
                let r = *group_index[gi].get_or_insert_with(|| {
                    next += 1;
                    next - 1
                });
                map[d] = Some(r);
            } else {
                map[d] = Some(next);
                next += 1;
            }
        }
        Ok(Reduction { map, fixed: values, n_reduced: next })
    }

    pub fn n_full(&self) -> usize {
        self.map.len()
    }

    pub fn n_reduced(&self) -> usize {
        self.n_reduced
    }

    pub fn reduced_index(&self, full: usize) -> Option<usize> {
        self.map[full]
    }

    /// Full vector holding the fixed values and zeros elsewhere.
    pub fn fixed_values(&self) -> &[f64] {
        &self.fixed
    }

    pub fn is_fixed(&self, full: usize) -> bool {
        self.map[full].is_none()
    }

    /// Sums full-space dual entries into reduced unknowns (`Tᵀ r`).
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_reduced];
        for (i, m) in self.map.iter().enumerate() {
            if let Some(r) = m {
                out[*r] += full[i];
            }
        }
        out
    }

    /// Picks the reduced unknowns out of a full primal vector (tied dofs are
    /// assumed equal; the first occurrence wins).
    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![f64::NAN; self.n_reduced];
        for (i, m) in self.map.iter().enumerate() {
            if let Some(r) = m {
                if out[*r].is_nan() {
                    out[*r] = full[i];
                }
            }
        }
        out
    }

    /// Full primal vector from reduced unknowns plus fixed values (`T x + x_D`).
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        self.map.iter().zip(&self.fixed).map(|(m, v)| m.map_or(*v, |r| reduced[r])).collect()
    }

    /// `Tᵀ A T` for a matrix acting between the full spaces of `rows` and `cols`.
    pub fn reduce_matrix(a: &CsrMatrix, rows: &Reduction, cols: &Reduction) -> CsrMatrix {
        let trip: Vec<(usize, usize, f64)> = a
            .triplets()
            .filter_map(|(i, j, v)| Some((rows.map[i]?, cols.map[j]?, v)))
            .collect();
        CsrMatrix::from_triplets(rows.n_reduced, cols.n_reduced, &trip)
    }

    /// Concatenation for block systems (offsets applied in order).
    pub fn concat(parts: &[&Reduction]) -> Reduction {
        let mut map = Vec::new();
        let mut fixed = Vec::new();
        let mut offset = 0;
        for p in parts {
            map.extend(p.map.iter().map(|m| m.map(|r| r + offset)));
            fixed.extend_from_slice(&p.fixed);
            offset += p.n_reduced;
        }
        Reduction { map, fixed, n_reduced: offset }
    }
}

/// Essential conditions of all three fields at time `t`.
#[derive(Debug, Clone)]
pub struct Constraints {
    pub u: Reduction,
    pub q: Reduction,
    pub p: Reduction,
    /// Full displacement dofs of each rigid plate.
    pub plates: Vec<Vec<usize>>,
}

impl Constraints {
    pub fn combined(&self) -> Reduction {
        Reduction::concat(&[&self.u, &self.q, &self.p])
    }
}

pub fn build_constraints(mesh: &Mesh, problem: &ProblemDefinition, t: f64) -> Result<Constraints> {
    let mut fixed_u: HashMap<usize, f64> = HashMap::new();
    let pin = |map: &mut HashMap<usize, f64>, dof: usize, value: f64, what: &str| -> Result<()> {
        match map.get(&dof) {
            Some(&old) if (old - value).abs() > 1e-12 * old.abs().max(value.abs()).max(1e-300) => Err(Error::Config(
                format!("conflicting {what} constraints on dof {dof}: {old} vs {value}"),
            )),
            _ => {
                map.insert(dof, value);
                Ok(())
            }
        }
    };
    let mut plates = Vec::new();
    for side in Side::ALL {
        let verts = mesh.boundary_vertices(side);
        match &problem.side(side).mechanics {
            MechanicsBc::Displacement(g) => {
                for &v in &verts {
                    let val = g(mesh.vertices[v], t);
                    pin(&mut fixed_u, 2 * v, val[0], "displacement")?;
                    pin(&mut fixed_u, 2 * v + 1, val[1], "displacement")?;
                }
            }
            MechanicsBc::Roller => {
                let comp = normal_component(side);
                for &v in &verts {
                    pin(&mut fixed_u, 2 * v + comp, 0.0, "displacement")?;
                }
            }
            MechanicsBc::Free => {}
            MechanicsBc::RigidPlate { .. } => {
                let comp = normal_component(side);
                plates.push(verts.iter().map(|&v| 2 * v + comp).collect::<Vec<_>>());
            }
        }
    }
    let u = Reduction::new(2 * mesh.n_vertices(), &fixed_u, &plates)?;

    let mut fixed_q: HashMap<usize, f64> = HashMap::new();
    for side in Side::ALL {
        if let FlowBc::Flux(g) = &problem.side(side).flow {
            for e in mesh.boundary_edges(side) {
                let val = outward_sign(mesh, e, side) * g(mesh.edge_midpoint(e), t);
                pin(&mut fixed_q, e, val, "flux")?;
            }
        }
    }
    let q = Reduction::new(mesh.n_edges(), &fixed_q, &[])?;
    Ok(Constraints { u, q, p: Reduction::identity(mesh.n_cells()), plates })
}

/// Symmetric elimination of essential dofs: returns `(Tᵀ A T, Tᵀ (b − A x_D))`.
pub fn apply_essential_bc(matrix: &CsrMatrix, rhs: &[f64], reduction: &Reduction) -> (CsrMatrix, Vec<f64>) {
    let lift = matrix.mul_vec(reduction.fixed_values());
    let shifted: Vec<f64> = rhs.iter().zip(&lift).map(|(b, l)| b - l).collect();
    (Reduction::reduce_matrix(matrix, reduction, reduction), reduction.restrict(&shifted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{p1_interpolate, rt0_interpolate};
    use crate::mesh::generate_rect_mesh;
    use crate::physics::{law_catalog, LawCase};
    use approx::assert_relative_eq;

    fn unit_material() -> MaterialModel {
        MaterialModel::manufactured(LawCase::Linear).unwrap()
    }

    #[test]
    fn rigid_translation_is_in_elasticity_kernel() {
        let mesh = generate_rect_mesh([0.0, 0.0], [1.0, 1.0], 3, 2).unwrap();
        let (ae, d, _) = assemble_mechanics(&mesh, &unit_material()).unwrap();
        let t = p1_interpolate(&mesh, |_| [0.3, -1.2]).coeffs;
        assert!(ae.mul_vec(&t).iter().all(|v| v.abs() < 1e-13));
        // rotation is also rigid
        let r = p1_interpolate(&mesh, |x| [-x[1], x[0]]).coeffs;
        assert!(ae.mul_vec(&r).iter().all(|v| v.abs() < 1e-13));
        assert!(ae.is_symmetric(1e-14) && d.is_symmetric(1e-14));
    }

    #[test]
    fn divergence_forms() {
        let mesh = generate_rect_mesh([0.0, 0.0], [1.0, 1.0], 1, 1).unwrap();
        let (_, d, b_up) = assemble_mechanics(&mesh, &unit_material()).unwrap();
        let u = p1_interpolate(&mesh, |x| x).coeffs;
        assert_relative_eq!(d.bilinear(&u, &u), 4.0, max_relative = 1e-14);
        let z = p1_interpolate(&mesh, |x| [x[0], 0.0]).coeffs;
        let ones = vec![1.0; mesh.n_cells()];
        assert_relative_eq!(b_up.bilinear(&z, &ones), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn flow_forms() {
        let mesh = generate_rect_mesh([0.0, 0.0], [1.0, 1.0], 1, 1).unwrap();
        let (mq, bq, mp) = assemble_flow(&mesh, &unit_material()).unwrap();
        assert_eq!(mp.get(0, 0), 0.5);
        assert_eq!(mp.get(1, 1), 0.5);
        let q = rt0_interpolate(&mesh, |_| [1.0, 0.0]).coeffs;
        assert_relative_eq!(mq.bilinear(&q, &q), 1.0, max_relative = 1e-14);
        // divergence theorem per cell
        for c in 0..2 {
            let flux: f64 = mesh.cell_edges[c].iter().map(|&(e, s)| s * mesh.edge_length(e) * q[e]).sum();
            assert_relative_eq!(bq.mul_vec(&q)[c], flux, epsilon = 1e-15);
        }
    }

    #[test]
    fn nonpositive_permeability_is_rejected() {
        let mesh = generate_rect_mesh([0.0, 0.0], [1.0, 1.0], 1, 1).unwrap();
        let mut mat = unit_material();
        mat.permeability = crate::physics::Permeability::Field(std::sync::Arc::new(|x| x[0] - 0.5));
        assert!(matches!(assemble_flow(&mesh, &mat), Err(Error::Permeability { .. })));
    }

    #[test]
    fn nonlinear_vectors() {
        let mesh = generate_rect_mesh([0.0, 0.0], [1.0, 1.0], 2, 2).unwrap();
        let mut mat = unit_material();
        let ops = BiotOperators::assemble(&mesh, &mat).unwrap();
        let p = vec![0.7; mesh.n_cells()];
        let u = p1_interpolate(&mesh, |x| x).coeffs;
        let nl = assemble_nonlinear_rhs(&ops, &mat, &p, &u);
        for (b, a) in nl.bp.iter().zip(&ops.areas) {
            assert_relative_eq!(*b, 0.7 * a, max_relative = 1e-15);
        }
        let (b, h) = law_catalog(LawCase::T1c1, 1.0, 1.0);
        mat.b_law = b;
        mat.h_law = h;
        let nl = assemble_nonlinear_rhs(&ops, &mat, &vec![0.0; mesh.n_cells()], &u);
        for (b, a) in nl.bp.iter().zip(&ops.areas) {
            assert_relative_eq!(*b, *a, max_relative = 1e-15);
        }
        // h(2) = 8 against a test field with unit divergence
        let z = p1_interpolate(&mesh, |x| [x[0], 0.0]).coeffs;
        let total: f64 = z.iter().zip(&nl.hu).map(|(a, b)| a * b).sum();
        assert_relative_eq!(total, 8.0, max_relative = 1e-14);
        assert!(nl.out_of_range > 0);
    }

    #[test]
    fn reduction_round_trip() {
        let fixed: HashMap<usize, f64> = [(0, 2.0), (5, -1.0)].into_iter().collect();
        let r = Reduction::new(6, &fixed, &[vec![2, 4]]).unwrap();
        assert_eq!(r.n_reduced(), 3);
        let full = r.expand(&[1.0, 3.0, 4.0]);
        assert_eq!(full, vec![2.0, 1.0, 3.0, 4.0, 3.0, -1.0]);
        assert_eq!(r.restrict(&[1.0; 6]), vec![1.0, 2.0, 1.0]);
        assert_eq!(r.gather(&full), vec![1.0, 3.0, 4.0]);
        let conflict: HashMap<usize, f64> = [(2, 0.0)].into_iter().collect();
        assert!(matches!(Reduction::new(6, &conflict, &[vec![2, 4]]), Err(Error::Config(_))));
    }

    #[test]
    fn elimination_matches_dense_substitution() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (1, 2, 1.0), (2, 1, 1.0), (2, 2, 2.0)]);
        let fixed: HashMap<usize, f64> = [(2, 1.5)].into_iter().collect();
        let r = Reduction::new(3, &fixed, &[]).unwrap();
        let (ar, br) = apply_essential_bc(&a, &[1.0, 2.0, 0.0], &r);
        assert!(ar.is_symmetric(0.0));
        assert_eq!(br, vec![1.0, 2.0 - 1.5]);
    }
}
