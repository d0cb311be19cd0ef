//! Conforming triangulations of rectangles, newest-vertex bisection and
//! reference-triangle quadrature.

mod bisect;
mod locate;
mod quadrature;

pub use bisect::bisect;
pub use locate::PointLocator;
pub use quadrature::{quadrature, QuadratureRule};

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn unit() -> Self {
        Rect::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Boundary segment of a rectangular domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundarySide {
    Left,
    Right,
    Bottom,
    Top,
}

impl BoundarySide {
    pub const ALL: [BoundarySide; 4] =
        [BoundarySide::Left, BoundarySide::Right, BoundarySide::Bottom, BoundarySide::Top];

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 2] {
        match self {
            BoundarySide::Left => [-1.0, 0.0],
            BoundarySide::Right => [1.0, 0.0],
            BoundarySide::Bottom => [0.0, -1.0],
            BoundarySide::Top => [0.0, 1.0],
        }
    }

    /// Index of the velocity component tangential to this side.
    pub fn tangential_component(self) -> usize {
        match self {
            BoundarySide::Left | BoundarySide::Right => 1,
            BoundarySide::Bottom | BoundarySide::Top => 0,
        }
    }

    /// Whether `p` lies on this side of `extent` (up to a relative tolerance).
    pub fn contains(self, extent: &Rect, p: [f64; 2]) -> bool {
        let tol = 1e-10 * extent.width().max(extent.height());
        let on_x = p[0] >= extent.x0 - tol && p[0] <= extent.x1 + tol;
        let on_y = p[1] >= extent.y0 - tol && p[1] <= extent.y1 + tol;
        match self {
            BoundarySide::Left => (p[0] - extent.x0).abs() <= tol && on_y,
            BoundarySide::Right => (p[0] - extent.x1).abs() <= tol && on_y,
            BoundarySide::Bottom => (p[1] - extent.y0).abs() <= tol && on_x,
            BoundarySide::Top => (p[1] - extent.y1).abs() <= tol && on_x,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    /// Adjacent triangles; the second is `None` on the boundary.
    pub triangles: (usize, Option<usize>),
    pub boundary: Option<BoundarySide>,
}

/// Conforming triangulation.
///
/// Triangles are counterclockwise. The refinement edge of triangle `[a, b, c]`
/// is `(a, b)` and `c` is its newest vertex. Local edge `i` of a triangle is
/// the edge opposite local vertex `i`.
#[derive(Clone, Debug)]
pub struct Mesh {
    id: u64,
    generation: u32,
    extent: Rect,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    tri_edges: Vec<[usize; 3]>,
    parents: Vec<usize>,
}

impl Mesh {
    pub(crate) fn from_parts(
        extent: Rect,
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        parents: Vec<usize>,
        generation: u32,
    ) -> Mesh {
        let (edges, tri_edges) = build_edges(&extent, &vertices, &triangles);
        Mesh {
            id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
            generation,
            extent,
            vertices,
            triangles,
            edges,
            tri_edges,
            parents,
        }
    }

    /// Process-unique identity of this mesh value.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Number of refinement passes since the base grid.
    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn extent(&self) -> Rect {
        self.extent
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge indices of each triangle, local edge `i` opposite local vertex `i`.
    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.tri_edges
    }

    /// For each triangle, the index of the triangle it descends from in the
    /// previous generation (identity on a base grid).
    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn triangle_points(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    /// Longest edge length.
    pub fn diameter(&self, t: usize) -> f64 {
        let p = self.triangle_points(t);
        (0..3).map(|i| dist(p[i], p[(i + 1) % 3])).fold(0.0, f64::max)
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].vertices;
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let p = self.triangle_points(t);
        [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
    }

    /// Constant gradients of the three barycentric coordinates on triangle `t`.
    pub fn barycentric_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangle_points(t);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let inv = 1.0 / det;
        [
            [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
            [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
            [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
        ]
    }

    /// Physical point for barycentric coordinates `l` on triangle `t`.
    pub fn map_point(&self, t: usize, l: [f64; 3]) -> [f64; 2] {
        let p = self.triangle_points(t);
        [l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0], l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1]]
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = (usize, BoundarySide)> + '_ {
        self.edges.iter().enumerate().filter_map(|(i, e)| e.boundary.map(|s| (i, s)))
    }

    /// Vertices lying on the boundary, sorted.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut flag = vec![false; self.num_vertices()];
        for (e, _) in self.boundary_edges() {
            for &v in &self.edges[e].vertices {
                flag[v] = true;
            }
        }
        (0..flag.len()).filter(|&v| flag[v]).collect()
    }

    /// Checks the structural invariants: positive areas, area sum, and edge
    /// incidence (one triangle on the boundary, two inside).
    pub fn check_invariants(&self) -> Result<()> {
        for t in 0..self.num_triangles() {
            if self.area(t) <= 0.0 {
                return Err(Error::Internal(format!("triangle {t} has non-positive area")));
            }
        }
        let total = self.total_area();
        let expected = self.extent.area();
        if ((total - expected) / expected).abs() > 1e-12 {
            return Err(Error::Internal(format!("area sum {total} differs from domain area {expected}")));
        }
        for (i, e) in self.edges.iter().enumerate() {
            match (e.triangles.1, e.boundary) {
                (None, Some(side)) => {
                    let m = self.edge_midpoint(i);
                    if !side.contains(&self.extent, m) {
                        return Err(Error::Internal(format!("edge {i} marked {side:?} but off that side")));
                    }
                }
                (Some(_), None) => {}
                (None, None) => {
                    return Err(Error::Internal(format!(
                        "edge {i} has a single triangle but is not on the boundary (hanging node)"
                    )))
                }
                (Some(_), Some(_)) => {
                    return Err(Error::Internal(format!("interior edge {i} carries a boundary marker")))
                }
            }
        }
        Ok(())
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn build_edges(extent: &Rect, vertices: &[[f64; 2]], triangles: &[[usize; 3]]) -> (Vec<Edge>, Vec<[usize; 3]>) {
    let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
    let mut edges: Vec<Edge> = Vec::with_capacity(triangles.len() * 3 / 2 + 8);
    let mut tri_edges = Vec::with_capacity(triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        let mut local = [0usize; 3];
        for (i, slot) in local.iter_mut().enumerate() {
            let a = tri[(i + 1) % 3];
            let b = tri[(i + 2) % 3];
            let key = (a.min(b), a.max(b));
            *slot = match lookup.get(&key) {
                Some(&e) => {
                    edges[e].triangles.1 = Some(t);
                    e
                }
                None => {
                    let e = edges.len();
                    edges.push(Edge { vertices: [a, b], triangles: (t, None), boundary: None });
                    lookup.insert(key, e);
                    e
                }
            };
        }
        tri_edges.push(local);
    }
    for e in edges.iter_mut() {
        if e.triangles.1.is_none() {
            let (pa, pb) = (vertices[e.vertices[0]], vertices[e.vertices[1]]);
            let m = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            e.boundary = BoundarySide::ALL
                .into_iter()
                .find(|s| s.contains(extent, m) && s.contains(extent, pa) && s.contains(extent, pb));
        }
    }
    (edges, tri_edges)
}

/// Structured triangulation of `extent` with `nx * ny` cells, each split
/// along its lower-left to upper-right diagonal.
pub fn build_rect_mesh(nx: usize, ny: usize, extent: Rect) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!("cell counts must be positive, got {nx} x {ny}")));
    }
    if !(extent.width() > 0.0 && extent.height() > 0.0) {
        return Err(Error::InvalidArgument(format!("rectangle must have positive side lengths, got {extent:?}")));
    }
    let hx = extent.width() / nx as f64;
    let hy = extent.height() / ny as f64;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { extent.x1 } else { extent.x0 + i as f64 * hx };
            let y = if j == ny { extent.y1 } else { extent.y0 + j as f64 * hy };
            vertices.push([x, y]);
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let a = idx(i, j);
            let b = idx(i + 1, j);
            let c = idx(i + 1, j + 1);
            let d = idx(i, j + 1);
            // The diagonal (a, c) is the refinement edge of both halves.
            triangles.push([c, a, b]);
            triangles.push([a, c, d]);
        }
    }
    let parents = (0..triangles.len()).collect();
    Ok(Mesh::from_parts(extent, vertices, triangles, parents, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_has_two_triangles() {
        let m = build_rect_mesh(1, 1, Rect::unit()).unwrap();
        assert_eq!(m.num_triangles(), 2);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        m.check_invariants().unwrap();
    }

    #[test]
    fn benchmark_domain_area() {
        let m = build_rect_mesh(4, 6, Rect::new(0.0, 0.0, 1.0, 1.5)).unwrap();
        assert!((m.total_area() - 1.5).abs() < 1e-14);
        m.check_invariants().unwrap();
        let interior = m.edges().iter().filter(|e| e.triangles.1.is_some()).count();
        let boundary = m.edges().len() - interior;
        assert_eq!(boundary, 2 * (4 + 6));
    }

    #[test]
    fn zero_cells_rejected() {
        assert!(matches!(build_rect_mesh(0, 3, Rect::unit()), Err(Error::InvalidArgument(_))));
        assert!(build_rect_mesh(2, 2, Rect::new(0.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn triangles_are_counterclockwise() {
        let m = build_rect_mesh(3, 5, Rect::new(-1.0, 0.0, 2.0, 1.0)).unwrap();
        assert!((0..m.num_triangles()).all(|t| m.area(t) > 0.0));
    }

    #[test]
    fn barycentric_gradients_sum_to_zero() {
        let m = build_rect_mesh(2, 3, Rect::new(0.0, 0.0, 1.0, 1.5)).unwrap();
        for t in 0..m.num_triangles() {
            let g = m.barycentric_gradients(t);
            assert!((g[0][0] + g[1][0] + g[2][0]).abs() < 1e-12);
            assert!((g[0][1] + g[1][1] + g[2][1]).abs() < 1e-12);
            let p = m.triangle_points(t);
            // grad l_i . (p_j - p_k) reproduces the Kronecker delta.
            for i in 0..3 {
                for j in 0..3 {
                    let d = [p[j][0] - p[(j + 1) % 3][0], p[j][1] - p[(j + 1) % 3][1]];
                    let expected = (i == j) as i32 as f64 - (i == (j + 1) % 3) as i32 as f64;
                    assert!((g[i][0] * d[0] + g[i][1] * d[1] - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn boundary_markers_by_side() {
        let m = build_rect_mesh(3, 2, Rect::unit()).unwrap();
        let count = |s| m.boundary_edges().filter(|&(_, side)| side == s).count();
        assert_eq!(count(BoundarySide::Left), 2);
        assert_eq!(count(BoundarySide::Right), 2);
        assert_eq!(count(BoundarySide::Bottom), 3);
        assert_eq!(count(BoundarySide::Top), 3);
    }
}
