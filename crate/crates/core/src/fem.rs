//! Discrete spaces: vector P1 for displacement, RT0 for Darcy flux, P0 for pressure.

use crate::mesh::{Mesh, Point};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Space {
    /// Continuous piecewise-linear vectors, dofs interleaved as `2 * vertex + component`.
    P1Vector,
    /// Lowest-order Raviart–Thomas, one normal-component dof per edge.
    Rt0,
    /// Piecewise constants, one dof per cell.
    P0,
}

impl Space {
    pub fn local_dofs(self) -> usize {
        match self {
            Space::P1Vector => 6,
            Space::Rt0 => 3,
            Space::P0 => 1,
        }
    }

    pub fn n_dofs(self, mesh: &Mesh) -> usize {
        match self {
            Space::P1Vector => 2 * mesh.n_vertices(),
            Space::Rt0 => mesh.n_edges(),
            Space::P0 => mesh.n_cells(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DofMap {
    pub space: Space,
    pub n_dofs: usize,
    cell_dofs: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, space: Space) -> Self {
        let k = space.local_dofs();
        let mut cell_dofs = Vec::with_capacity(k * mesh.n_cells());
        for c in 0..mesh.n_cells() {
            match space {
                Space::P1Vector => {
                    for v in mesh.cells[c] {
                        cell_dofs.push(2 * v);
                        cell_dofs.push(2 * v + 1);
                    }
                }
                Space::Rt0 => cell_dofs.extend(mesh.cell_edges[c].iter().map(|&(e, _)| e)),
                Space::P0 => cell_dofs.push(c),
            }
        }
        DofMap { space, n_dofs: space.n_dofs(mesh), cell_dofs }
    }

    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        let k = self.space.local_dofs();
        &self.cell_dofs[k * cell..k * (cell + 1)]
    }
}

/// Coefficients of a function in one of the three spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    pub space: Space,
    pub coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(mesh: &Mesh, space: Space) -> Self {
        FeFunction { space, coeffs: vec![0.0; space.n_dofs(mesh)] }
    }

    pub fn from_coeffs(mesh: &Mesh, space: Space, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.n_dofs(mesh) {
            return Err(Error::Input(format!(
                "{space:?} function needs {} coefficients, got {}",
                space.n_dofs(mesh),
                coeffs.len()
            )));
        }
        Ok(FeFunction { space, coeffs })
    }

    pub fn scaled(&self, a: f64) -> Self {
        FeFunction { space: self.space, coeffs: self.coeffs.iter().map(|c| a * c).collect() }
    }

    pub fn sub(&self, other: &FeFunction) -> Result<Self> {
        if self.space != other.space || self.coeffs.len() != other.coeffs.len() {
            return Err(Error::Input(format!("space mismatch: {:?} vs {:?}", self.space, other.space)));
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(FeFunction { space: self.space, coeffs })
    }

    /// Value at a point of `cell`. Scalars are returned in the first slot.
    pub fn eval(&self, mesh: &Mesh, cell: usize, x: Point) -> Result<Point> {
        match self.space {
            Space::P0 => Ok([self.coeffs[cell], 0.0]),
            Space::P1Vector => {
                let b = mesh.barycentric(cell, x);
                let c = mesh.cells[cell];
                let mut v = [0.0; 2];
                for i in 0..3 {
                    v[0] += b[i] * self.coeffs[2 * c[i]];
                    v[1] += b[i] * self.coeffs[2 * c[i] + 1];
                }
                Ok(v)
            }
            Space::Rt0 => {
                let basis = rt0_basis(mesh, cell, x)?;
                let mut v = [0.0; 2];
                for (i, (phi, _)) in basis.iter().enumerate() {
                    let dof = self.coeffs[mesh.cell_edges[cell][i].0];
                    v[0] += dof * phi[0];
                    v[1] += dof * phi[1];
                }
                Ok(v)
            }
        }
    }

    pub fn local_coeffs(&self, dofs: &[usize]) -> Vec<f64> {
        dofs.iter().map(|&d| self.coeffs[d]).collect()
    }
}

/// Points in barycentric coordinates; weights sum to one (multiply by the cell area).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

pub fn quadrature(degree: usize) -> Result<QuadratureRule> {
    match degree {
        1 => Ok(QuadratureRule { degree, points: vec![[1.0 / 3.0; 3]], weights: vec![1.0] }),
        2 => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            Ok(QuadratureRule { degree, points: vec![[a, b, b], [b, a, b], [b, b, a]], weights: vec![1.0 / 3.0; 3] })
        }
        4 => {
            // Dunavant 6-point rule
            let (a1, w1) = (0.445_948_490_915_965, 0.223_381_589_678_011);
            let (a2, w2) = (0.091_576_213_509_771, 0.109_951_743_655_322);
            let (b1, b2) = (1.0 - 2.0 * a1, 1.0 - 2.0 * a2);
            Ok(QuadratureRule {
                degree,
                points: vec![[a1, a1, b1], [a1, b1, a1], [b1, a1, a1], [a2, a2, b2], [a2, b2, a2], [b2, a2, a2]],
                weights: vec![w1, w1, w1, w2, w2, w2],
            })
        }
        _ => Err(Error::Input(format!("unsupported quadrature degree {degree} (use 1, 2 or 4)"))),
    }
}

/// The three RT0 basis functions of `cell` at `x` with their (constant) divergences.
///
/// Basis `i` belongs to the local edge opposite vertex `i`; its normal component
/// against the global edge normal is one on that edge and zero on the others.
pub fn rt0_basis(mesh: &Mesh, cell: usize, x: Point) -> Result<[(Point, f64); 3]> {
    let b = mesh.barycentric(cell, x);
    if b.iter().any(|&l| l < -1e-10) {
        return Err(Error::Domain { cell, bary: b });
    }
    Ok(rt0_basis_unchecked(mesh, cell, x))
}

pub(crate) fn rt0_basis_unchecked(mesh: &Mesh, cell: usize, x: Point) -> [(Point, f64); 3] {
    let p = mesh.cell_points(cell);
    let area = 0.5
        * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let mut out = [([0.0; 2], 0.0); 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let (edge, sign) = mesh.cell_edges[cell][i];
        let scale = sign * mesh.edge_length(edge) / (2.0 * area);
        *slot = ([scale * (x[0] - p[i][0]), scale * (x[1] - p[i][1])], 2.0 * scale);
    }
    out
}

/// Cellwise-constant derivatives of a P1 vector field.
#[derive(Debug, Clone, Copy)]
pub struct P1Derivatives {
    pub value: Point,
    /// `gradient[i][j] = d u_i / d x_j`
    pub gradient: [[f64; 2]; 2],
    pub divergence: f64,
    pub strain: [[f64; 2]; 2],
}

/// Evaluates a P1 vector field from its six local coefficients `[u0x,u0y,u1x,u1y,u2x,u2y]`.
/// The value is taken at the centroid.
pub fn p1_vector_eval(mesh: &Mesh, cell: usize, coeffs: &[f64; 6]) -> Result<P1Derivatives> {
    let g = mesh.cell_geometry(cell)?;
    let mut gradient = [[0.0; 2]; 2];
    let mut value = [0.0; 2];
    for a in 0..3 {
        for i in 0..2 {
            let c = coeffs[2 * a + i];
            value[i] += c / 3.0;
            for j in 0..2 {
                gradient[i][j] += c * g.grads[a][j];
            }
        }
    }
    let off = 0.5 * (gradient[0][1] + gradient[1][0]);
    Ok(P1Derivatives {
        value,
        gradient,
        divergence: gradient[0][0] + gradient[1][1],
        strain: [[gradient[0][0], off], [off, gradient[1][1]]],
    })
}

/// Divergence of a global P1 vector field on one cell.
pub fn p1_divergence(mesh: &Mesh, grads: &[Point; 3], cell: usize, coeffs: &[f64]) -> f64 {
    let c = mesh.cells[cell];
    (0..3).map(|a| coeffs[2 * c[a]] * grads[a][0] + coeffs[2 * c[a] + 1] * grads[a][1]).sum()
}

/// Local mass matrix of the space on one cell (`k × k`, row-major).
pub fn local_mass(mesh: &Mesh, space: Space, cell: usize) -> Result<Vec<f64>> {
    let g = mesh.cell_geometry(cell)?;
    Ok(match space {
        Space::P0 => vec![g.area],
        Space::P1Vector => {
            let mut m = vec![0.0; 36];
            for a in 0..3 {
                for b in 0..3 {
                    let v = g.area / 12.0 * if a == b { 2.0 } else { 1.0 };
                    m[(2 * a) * 6 + 2 * b] = v;
                    m[(2 * a + 1) * 6 + 2 * b + 1] = v;
                }
            }
            m
        }
        Space::Rt0 => {
            let rule = quadrature(2)?;
            let mut m = vec![0.0; 9];
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let x = mesh.map_point(cell, *bary);
                let phi = rt0_basis_unchecked(mesh, cell, x);
                for i in 0..3 {
                    for j in 0..3 {
                        m[i * 3 + j] += w * g.area * (phi[i].0[0] * phi[j].0[0] + phi[i].0[1] * phi[j].0[1]);
                    }
                }
            }
            m
        }
    })
}

pub fn l2_inner(mesh: &Mesh, f: &FeFunction, g: &FeFunction) -> Result<f64> {
    if f.space != g.space {
        return Err(Error::Input(format!("space mismatch: {:?} vs {:?}", f.space, g.space)));
    }
    let n = f.space.n_dofs(mesh);
    if f.coeffs.len() != n || g.coeffs.len() != n {
        return Err(Error::Input(format!("coefficient length does not match {:?} on this mesh", f.space)));
    }
    let dm = DofMap::new(mesh, f.space);
    let k = f.space.local_dofs();
    let mut sum = 0.0;
    for c in 0..mesh.n_cells() {
        let m = local_mass(mesh, f.space, c)?;
        let dofs = dm.cell_dofs(c);
        for i in 0..k {
            for j in 0..k {
                sum += f.coeffs[dofs[i]] * m[i * k + j] * g.coeffs[dofs[j]];
            }
        }
    }
    Ok(sum)
}

pub fn l2_norm(mesh: &Mesh, f: &FeFunction) -> Result<f64> {
    Ok(l2_inner(mesh, f, f)?.max(0.0).sqrt())
}

/// RT0 interpolant: dof = field · global normal at the edge midpoint (exact for RT0 fields).
pub fn rt0_interpolate(mesh: &Mesh, field: impl Fn(Point) -> Point) -> FeFunction {
    let coeffs = (0..mesh.n_edges())
        .map(|e| {
            let v = field(mesh.edge_midpoint(e));
            let n = mesh.edge_normal(e);
            v[0] * n[0] + v[1] * n[1]
        })
        .collect();
    FeFunction { space: Space::Rt0, coeffs }
}

pub fn p1_interpolate(mesh: &Mesh, field: impl Fn(Point) -> Point) -> FeFunction {
    let mut coeffs = Vec::with_capacity(2 * mesh.n_vertices());
    for &x in &mesh.vertices {
        let v = field(x);
        coeffs.extend_from_slice(&v);
    }
    FeFunction { space: Space::P1Vector, coeffs }
}

/// P0 projection using the given quadrature rule (cell averages).
pub fn p0_project(mesh: &Mesh, rule: &QuadratureRule, field: impl Fn(Point) -> f64) -> FeFunction {
    let coeffs = (0..mesh.n_cells())
        .map(|c| rule.points.iter().zip(&rule.weights).map(|(b, w)| w * field(mesh.map_point(c, *b))).sum())
        .collect();
    FeFunction { space: Space::P0, coeffs }
}
