use crate::error::{Error, Result};
use crate::mesh::{BoundarySide, Mesh};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    P1Scalar,
    P2Vector,
    P1Pressure,
}

/// Geometric entity carrying a degree of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofEntity {
    Vertex(usize),
    Edge(usize),
}

/// Lagrange space on a mesh.
///
/// P1 dofs are the vertices. P2 vector dofs are ordered component-major:
/// `[x-component (vertices, then edge midpoints), y-component (same)]`.
#[derive(Clone, Debug)]
pub struct FeSpace {
    kind: SpaceKind,
    mesh: Arc<Mesh>,
}

impl FeSpace {
    pub fn new(kind: SpaceKind, mesh: Arc<Mesh>) -> Self {
        FeSpace { kind, mesh }
    }

    pub fn p1(mesh: &Arc<Mesh>) -> Self {
        FeSpace::new(SpaceKind::P1Scalar, mesh.clone())
    }

    pub fn p2(mesh: &Arc<Mesh>) -> Self {
        FeSpace::new(SpaceKind::P2Vector, mesh.clone())
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Scalar P2 dofs per component.
    pub fn n_scalar(&self) -> usize {
        match self.kind {
            SpaceKind::P2Vector => self.mesh.num_vertices() + self.mesh.num_edges(),
            _ => self.mesh.num_vertices(),
        }
    }

    pub fn ndof(&self) -> usize {
        match self.kind {
            SpaceKind::P2Vector => 2 * self.n_scalar(),
            _ => self.mesh.num_vertices(),
        }
    }

    /// Entity of scalar dof `i` (per component for P2).
    pub fn entity(&self, i: usize) -> DofEntity {
        let nv = self.mesh.num_vertices();
        if i < nv {
            DofEntity::Vertex(i)
        } else {
            DofEntity::Edge(i - nv)
        }
    }

    /// Coordinates of scalar dof `i`.
    pub fn dof_point(&self, i: usize) -> [f64; 2] {
        match self.entity(i) {
            DofEntity::Vertex(v) => self.mesh.vertices()[v],
            DofEntity::Edge(e) => self.mesh.edge_midpoint(e),
        }
    }

    /// Local scalar dofs of triangle `t`: the three vertices, then P2 adds
    /// the three edges (edge `i` opposite vertex `i`).
    pub fn local_dofs(&self, t: usize) -> ([usize; 6], usize) {
        let tri = self.mesh.triangles()[t];
        match self.kind {
            SpaceKind::P2Vector => {
                let nv = self.mesh.num_vertices();
                let te = self.mesh.triangle_edges()[t];
                ([tri[0], tri[1], tri[2], nv + te[0], nv + te[1], nv + te[2]], 6)
            }
            _ => ([tri[0], tri[1], tri[2], 0, 0, 0], 3),
        }
    }

    /// Scalar dofs on the boundary with the side they lie on. Corner vertices
    /// are reported once, with the first side in `BoundarySide::ALL` order.
    pub fn boundary_dofs(&self) -> Vec<(usize, BoundarySide)> {
        let mesh = &self.mesh;
        let nv = mesh.num_vertices();
        let mut side: Vec<Option<BoundarySide>> = vec![None; self.n_scalar()];
        for (e, s) in mesh.boundary_edges() {
            for &v in &mesh.edges()[e].vertices {
                side[v] = Some(match side[v] {
                    Some(prev) if prev < s => prev,
                    _ => s,
                });
            }
            if self.kind == SpaceKind::P2Vector {
                side[nv + e] = Some(s);
            }
        }
        side.iter().enumerate().filter_map(|(i, s)| s.map(|s| (i, s))).collect()
    }

    pub fn check_field(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.ndof() {
            return Err(Error::InvalidArgument(format!(
                "field has {} coefficients, space {:?} has {}",
                values.len(),
                self.kind,
                self.ndof()
            )));
        }
        Ok(())
    }
}

/// P1 function on a mesh.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        FeSpace::p1(&mesh).check_field(&values)?;
        Ok(ScalarField { mesh, values })
    }

    pub fn constant(mesh: &Arc<Mesh>, c: f64) -> Self {
        ScalarField { mesh: mesh.clone(), values: vec![c; mesh.num_vertices()] }
    }

    pub fn from_fn(mesh: &Arc<Mesh>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = mesh.vertices().iter().map(|&p| f(p)).collect();
        ScalarField { mesh: mesh.clone(), values }
    }

    /// Value at barycentric point `l` of triangle `t`.
    pub fn eval_local(&self, t: usize, l: [f64; 3]) -> f64 {
        let tri = self.mesh.triangles()[t];
        l[0] * self.values[tri[0]] + l[1] * self.values[tri[1]] + l[2] * self.values[tri[2]]
    }

    pub fn gradient(&self, t: usize) -> [f64; 2] {
        let tri = self.mesh.triangles()[t];
        let g = self.mesh.barycentric_gradients(t);
        let mut out = [0.0; 2];
        for i in 0..3 {
            out[0] += self.values[tri[i]] * g[i][0];
            out[1] += self.values[tri[i]] * g[i][1];
        }
        out
    }
}

/// P2 vector function on a mesh, coefficients component-major.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl VectorField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        FeSpace::p2(&mesh).check_field(&values)?;
        Ok(VectorField { mesh, values })
    }

    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        let n = FeSpace::p2(mesh).ndof();
        VectorField { mesh: mesh.clone(), values: vec![0.0; n] }
    }

    pub fn from_fn(mesh: &Arc<Mesh>, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let space = FeSpace::p2(mesh);
        let n2 = space.n_scalar();
        let mut values = vec![0.0; 2 * n2];
        for i in 0..n2 {
            let v = f(space.dof_point(i));
            values[i] = v[0];
            values[n2 + i] = v[1];
        }
        VectorField { mesh: mesh.clone(), values }
    }

    pub fn n_scalar(&self) -> usize {
        self.values.len() / 2
    }

    pub fn eval_local(&self, t: usize, l: [f64; 3]) -> [f64; 2] {
        let (dofs, _) = FeSpace::p2(&self.mesh).local_dofs(t);
        let n = super::basis::p2_values(l);
        let n2 = self.n_scalar();
        let mut out = [0.0; 2];
        for k in 0..6 {
            out[0] += n[k] * self.values[dofs[k]];
            out[1] += n[k] * self.values[n2 + dofs[k]];
        }
        out
    }
}
