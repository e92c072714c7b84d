//! Structured triangulations of axis-aligned rectangles.
//!
//! Every quad of the `nx × ny` grid is split along its lower-left to
//! upper-right diagonal. Edges are globally oriented from the lower to the
//! higher vertex index; each cell stores the sign that turns the global edge
//! normal into its outward normal.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    /// Code used by the text dump (`-1` marks interior edges).
    pub fn code(self) -> i32 {
        match self {
            Side::Left => 0,
            Side::Right => 1,
            Side::Bottom => 2,
            Side::Top => 3,
        }
    }

    pub fn outward_normal(self) -> Point {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }
}

/// Area, barycentric gradients and diameter of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub area: f64,
    pub grads: [Point; 3],
    pub diameter: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Counter-clockwise vertex triples.
    pub cells: Vec<[usize; 3]>,
    /// `(low, high)` vertex pairs.
    pub edges: Vec<[usize; 2]>,
    /// Local edge `i` is opposite local vertex `i`.
    pub cell_edges: Vec<[(usize, f64); 3]>,
    pub boundary_tags: HashMap<usize, Side>,
    origin: Point,
    extent: Point,
    nx: usize,
    ny: usize,
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn extent(&self) -> Point {
        self.extent
    }

    pub fn divisions(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn cell_points(&self, cell: usize) -> [Point; 3] {
        let c = self.cells[cell];
        [self.vertices[c[0]], self.vertices[c[1]], self.vertices[c[2]]]
    }

    pub fn centroid(&self, cell: usize) -> Point {
        let p = self.cell_points(cell);
        [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
    }

    /// Maps barycentric coordinates to a physical point of `cell`.
    pub fn map_point(&self, cell: usize, bary: [f64; 3]) -> Point {
        let p = self.cell_points(cell);
        [
            bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
            bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
        ]
    }

    /// Barycentric coordinates of a physical point with respect to `cell`.
    pub fn barycentric(&self, cell: usize, x: Point) -> [f64; 3] {
        let p = self.cell_points(cell);
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let l1 = ((x[0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (x[1] - p[0][1])) / det;
        let l2 = ((p[1][0] - p[0][0]) * (x[1] - p[0][1]) - (x[0] - p[0][0]) * (p[1][1] - p[0][1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn cell_geometry(&self, cell: usize) -> Result<CellGeometry> {
        if cell >= self.cells.len() {
            return Err(Error::Input(format!("cell index {cell} out of range ({} cells)", self.cells.len())));
        }
        let p = self.cell_points(cell);
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let area = 0.5 * det;
        if !(area > 0.0) {
            return Err(Error::Mesh(format!("cell {cell} is degenerate or clockwise (area {area})")));
        }
        let mut grads = [[0.0; 2]; 3];
        for (i, g) in grads.iter_mut().enumerate() {
            let a = p[(i + 1) % 3];
            let b = p[(i + 2) % 3];
            *g = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
        }
        let diameter = (0..3)
            .map(|i| dist(p[i], p[(i + 1) % 3]))
            .fold(0.0_f64, f64::max);
        Ok(CellGeometry { area, grads, diameter })
    }

    /// Mesh size: the largest cell diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.n_cells())
            .map(|c| self.cell_geometry(c).map(|g| g.diameter).unwrap_or(0.0))
            .fold(0.0, f64::max)
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let [a, b] = self.edges[edge];
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn edge_midpoint(&self, edge: usize) -> Point {
        let [a, b] = self.edges[edge];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    /// Unit normal of the globally oriented edge: the tangent low→high rotated clockwise.
    pub fn edge_normal(&self, edge: usize) -> Point {
        let [a, b] = self.edges[edge];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let len = dist(pa, pb);
        [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len]
    }

    pub fn boundary_edges(&self, side: Side) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary_tags
            .iter()
            .filter(|(_, s)| **s == side)
            .map(|(e, _)| *e)
            .collect();
        out.sort_unstable();
        out
    }

    /// Vertices on a side, sorted by index.
    pub fn boundary_vertices(&self, side: Side) -> Vec<usize> {
        let mut out: Vec<usize> = self.boundary_edges(side).iter().flat_map(|&e| self.edges[e]).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Index of the cell containing `x`, by direct lookup on the structured grid.
    pub fn locate(&self, x: Point) -> Option<usize> {
        let fx = (x[0] - self.origin[0]) / self.extent[0] * self.nx as f64;
        let fy = (x[1] - self.origin[1]) / self.extent[1] * self.ny as f64;
        if !(0.0..=self.nx as f64).contains(&fx) || !(0.0..=self.ny as f64).contains(&fy) {
            return None;
        }
        let i = (fx.floor() as usize).min(self.nx - 1);
        let j = (fy.floor() as usize).min(self.ny - 1);
        let (lx, ly) = (fx - i as f64, fy - j as f64);
        let quad = j * self.nx + i;
        Some(if ly <= lx { 2 * quad } else { 2 * quad + 1 })
    }

    /// Plain-text dump: header `V E F`, vertex lines, cell lines, edge lines with side code.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.n_vertices(), self.n_edges(), self.n_cells());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.17e} {:.17e}", v[0], v[1]);
        }
        for c in &self.cells {
            let _ = writeln!(s, "{} {} {}", c[0], c[1], c[2]);
        }
        for (e, [a, b]) in self.edges.iter().enumerate() {
            let tag = self.boundary_tags.get(&e).map_or(-1, |s| s.code());
            let _ = writeln!(s, "{a} {b} {tag}");
        }
        s
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub fn generate_rect_mesh(origin: Point, extent: Point, nx: usize, ny: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::Input(format!("mesh divisions must be positive, got {nx} x {ny}")));
    }
    if !(extent[0] > 0.0 && extent[1] > 0.0) || !extent.iter().chain(origin.iter()).all(|v| v.is_finite()) {
        return Err(Error::Input(format!("mesh extent must be positive and finite, got {extent:?}")));
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([
                origin[0] + extent[0] * i as f64 / nx as f64,
                origin[1] + extent[1] * j as f64 / ny as f64,
            ]);
        }
    }
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            cells.push([v00, v10, v11]);
            cells.push([v00, v11, v01]);
        }
    }

    let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut cell_edges = Vec::with_capacity(cells.len());
    for c in &cells {
        let mut local = [(0, 0.0); 3];
        for (i, slot) in local.iter_mut().enumerate() {
            let a = c[(i + 1) % 3];
            let b = c[(i + 2) % 3];
            let key = [a.min(b), a.max(b)];
            let e = *edge_index.entry(key).or_insert_with(|| {
                edges.push(key);
                edges.len() - 1
            });
            // counter-clockwise traversal a -> b is outward-normal positive
            *slot = (e, if a < b { 1.0 } else { -1.0 });
        }
        cell_edges.push(local);
    }

    let ij = |v: usize| (v % (nx + 1), v / (nx + 1));
    let mut boundary_tags = HashMap::new();
    for (e, &[a, b]) in edges.iter().enumerate() {
        let ((ia, ja), (ib, jb)) = (ij(a), ij(b));
        let side = if ia == 0 && ib == 0 {
            Some(Side::Left)
        } else if ia == nx && ib == nx {
            Some(Side::Right)
        } else if ja == 0 && jb == 0 {
            Some(Side::Bottom)
        } else if ja == ny && jb == ny {
            Some(Side::Top)
        } else {
            None
        };
        if let Some(s) = side {
            boundary_tags.insert(e, s);
        }
    }

    Ok(Mesh { vertices, cells, edges, cell_edges, boundary_tags, origin, extent, nx, ny })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn edge_cell_signs(mesh: &Mesh) -> Vec<Vec<f64>> {
        let mut signs = vec![Vec::new(); mesh.n_edges()];
        for ce in &mesh.cell_edges {
            for &(e, s) in ce {
                signs[e].push(s);
            }
        }
        signs
    }

    #[test]
    fn smallest_mesh_counts() {
        let m = generate_rect_mesh([0.0, 0.0], [1.0, 1.0], 1, 1).unwrap();
        assert_eq!((m.n_vertices(), m.n_edges(), m.n_cells()), (4, 5, 2));
        assert_eq!(m.n_vertices() as i64 - m.n_edges() as i64 + m.n_cells() as i64, 1);
        let total: usize = Side::ALL.iter().map(|&s| m.boundary_edges(s).len()).sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn two_by_two_counts() {
        let m = generate_rect_mesh([0.0, 0.0], [1.0, 1.0], 2, 2).unwrap();
        assert_eq!((m.n_vertices(), m.n_edges(), m.n_cells()), (9, 16, 8));
        let bottom = m.boundary_edges(Side::Bottom);
        assert_eq!(bottom.len(), 2);
        for e in bottom {
            for v in m.edges[e] {
                assert_eq!(m.vertices[v][1], 0.0);
            }
        }
    }

    #[test]
    fn mandel_grid_counts() {
        let m = generate_rect_mesh([0.0, 0.0], [100.0, 10.0], 40, 40).unwrap();
        assert_eq!(m.n_vertices(), 1681);
        assert_eq!(m.n_cells(), 3200);
        // counting oracle: one boundary edge per division on each side
        for (side, n) in [(Side::Left, 40), (Side::Right, 40), (Side::Top, 40), (Side::Bottom, 40)] {
            assert_eq!(m.boundary_edges(side).len(), n);
        }
    }

    #[test]
    fn reference_triangle_geometry() {
        let mut m = generate_rect_mesh([0.0, 0.0], [1.0, 1.0], 1, 1).unwrap();
        m.vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        m.cells[0] = [0, 1, 2];
        let g = m.cell_geometry(0).unwrap();
        assert_relative_eq!(g.area, 0.5);
        assert_eq!(g.grads, [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]);

        m.vertices = vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [1.0, 1.0]];
        let g = m.cell_geometry(0).unwrap();
        assert_relative_eq!(g.area, 2.0);
        assert_eq!(g.grads, [[-0.5, -0.5], [0.5, 0.0], [0.0, 0.5]]);
    }

    #[test]
    fn degenerate_cell_is_rejected() {
        let mut m = generate_rect_mesh([0.0, 0.0], [1.0, 1.0], 1, 1).unwrap();
        m.vertices[1] = [0.0, 0.0];
        assert!(matches!(m.cell_geometry(0), Err(Error::Mesh(_))));
        assert!(matches!(m.cell_geometry(7), Err(Error::Input(_))));
    }

    #[test]
    fn invalid_inputs() {
        assert!(generate_rect_mesh([0.0, 0.0], [1.0, 1.0], 0, 1).is_err());
        assert!(generate_rect_mesh([0.0, 0.0], [0.0, 1.0], 1, 1).is_err());
        assert!(generate_rect_mesh([0.0, 0.0], [1.0, -1.0], 1, 1).is_err());
    }

    #[test]
    fn topology_invariants() {
        for (nx, ny) in [(1, 1), (3, 2), (5, 7), (16, 16)] {
            let m = generate_rect_mesh([-1.0, 2.0], [3.0, 0.5], nx, ny).unwrap();
            assert_eq!(m.n_vertices() as i64 - m.n_edges() as i64 + m.n_cells() as i64, 1);
            for (e, s) in edge_cell_signs(&m).iter().enumerate() {
                if m.boundary_tags.contains_key(&e) {
                    assert_eq!(s.len(), 1);
                } else {
                    assert_eq!(s.len(), 2);
                    assert_eq!(s[0] * s[1], -1.0);
                }
            }
            let mut total = 0.0;
            for c in 0..m.n_cells() {
                let g = m.cell_geometry(c).unwrap();
                assert!(g.area > 0.0);
                let sx: f64 = g.grads.iter().map(|v| v[0]).sum();
                let sy: f64 = g.grads.iter().map(|v| v[1]).sum();
                assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12);
                total += g.area;
            }
            assert_relative_eq!(total, 1.5, max_relative = 1e-12);
            let mut seen = 0;
            for side in Side::ALL {
                for e in m.boundary_edges(side) {
                    seen += 1;
                    for v in m.edges[e] {
                        let [x, y] = m.vertices[v];
                        let on = match side {
                            Side::Left => x == -1.0,
                            Side::Right => (x - 2.0).abs() < 1e-12,
                            Side::Bottom => y == 2.0,
                            Side::Top => (y - 2.5).abs() < 1e-12,
                        };
                        assert!(on);
                    }
                }
            }
            assert_eq!(seen, m.boundary_tags.len());
            assert_eq!(seen, 2 * (nx + ny));
        }
    }

    #[test]
    fn outward_sign_matches_geometry() {
        let m = generate_rect_mesh([0.0, 0.0], [1.0, 1.0], 3, 3).unwrap();
        for c in 0..m.n_cells() {
            let centroid = m.centroid(c);
            for &(e, s) in &m.cell_edges[c] {
                let n = m.edge_normal(e);
                let mid = m.edge_midpoint(e);
                let outward = (mid[0] - centroid[0]) * n[0] + (mid[1] - centroid[1]) * n[1];
                assert!(outward * s > 0.0);
            }
        }
    }

    #[test]
    fn locate_finds_containing_cell() {
        let m = generate_rect_mesh([0.0, 0.0], [2.0, 1.0], 4, 3).unwrap();
        for &x in &[[0.1, 0.05], [1.9, 0.95], [0.77, 0.41], [2.0, 1.0], [0.0, 0.0]] {
            let c = m.locate(x).unwrap();
            let b = m.barycentric(c, x);
            assert!(b.iter().all(|&l| l > -1e-12), "{x:?} -> {c} {b:?}");
        }
        assert!(m.locate([2.1, 0.5]).is_none());
    }

    #[test]
    fn text_dump_header_and_lines() {
        let m = generate_rect_mesh([0.0, 0.0], [1.0, 1.0], 1, 1).unwrap();
        let txt = m.to_text();
        let lines: Vec<&str> = txt.lines().collect();
        assert_eq!(lines[0], "4 5 2");
        assert_eq!(lines.len(), 1 + 4 + 2 + 5);
        let interior = lines[7..].iter().filter(|l| l.ends_with(" -1")).count();
        assert_eq!(interior, 1);
    }
}
