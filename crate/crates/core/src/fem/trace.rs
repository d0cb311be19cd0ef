use super::space::FeSpace;
use super::sparse::{CscMatrix, SparseLu};
use crate::error::{Error, Result};
use crate::mesh::{BoundarySide, Mesh};
use std::sync::Arc;

/// Gauss–Legendre on [0, 1], 5 points.
const GAUSS5: [(f64, f64); 5] = [
    (0.046_910_077_030_668_004, 0.118_463_442_528_094_54),
    (0.230_765_344_947_158_45, 0.239_314_335_249_683_23),
    (0.5, 0.284_444_444_444_444_44),
    (0.769_234_655_052_841_6, 0.239_314_335_249_683_23),
    (0.953_089_922_969_332, 0.118_463_442_528_094_54),
];

#[inline]
fn edge_basis(s: f64) -> [f64; 3] {
    [(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)]
}

/// Constrained L2 projection onto continuous P2 boundary traces with zero
/// net normal flux.
pub struct TraceProjector {
    mesh: Arc<Mesh>,
    /// Global P2 vector dof of each boundary unknown (`c * n2 + i`).
    dofs: Vec<usize>,
    /// Per boundary edge: side and local unknown indices for the
    /// endpoints and midpoint, for each component.
    edges: Vec<(usize, BoundarySide, [[usize; 3]; 2])>,
    flux: Vec<f64>,
    lu: SparseLu,
}

impl TraceProjector {
    pub fn new(mesh: &Arc<Mesh>) -> Result<Self> {
        let p2 = FeSpace::p2(mesh);
        let n2 = p2.n_scalar();
        let nv = mesh.num_vertices();
        let bdofs = p2.boundary_dofs();
        let mut local = vec![usize::MAX; n2];
        for (k, &(i, _)) in bdofs.iter().enumerate() {
            local[i] = k;
        }
        let nb = bdofs.len();
        let mut dofs = Vec::with_capacity(2 * nb);
        for c in 0..2 {
            dofs.extend(bdofs.iter().map(|&(i, _)| c * n2 + i));
        }
        let mut edges = Vec::new();
        let mut flux = vec![0.0; 2 * nb];
        let mut t = Vec::new();
        for (e, side) in mesh.boundary_edges() {
            let [a, b] = mesh.edges()[e].vertices;
            let ids = [local[a], local[b], local[nv + e]];
            let idx = [ids, [ids[0] + nb, ids[1] + nb, ids[2] + nb]];
            let len = mesh.edge_length(e);
            let nrm = side.normal();
            for &(s, w) in &GAUSS5 {
                let n = edge_basis(s);
                for i in 0..3 {
                    for c in 0..2 {
                        flux[idx[c][i]] += w * len * n[i] * nrm[c];
                    }
                    for j in 0..3 {
                        let m = w * len * n[i] * n[j];
                        for row in idx.iter() {
                            t.push((row[i], row[j], m));
                        }
                    }
                }
            }
            edges.push((e, side, idx));
        }
        let n = 2 * nb;
        // Bordered system [[M, f], [f^T, 0]]; the flux row is scaled to the
        // size of the mass entries.
        let scale = 1.0 / flux.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        let h = t.iter().map(|x| x.2.abs()).fold(0.0, f64::max);
        for (k, &f) in flux.iter().enumerate() {
            if f != 0.0 {
                t.push((k, n, f * scale * h));
                t.push((n, k, f * scale * h));
            }
        }
        t.push((n, n, 0.0));
        let a = CscMatrix::from_triplets(n + 1, n + 1, &t);
        let lu = SparseLu::factor(&a).map_err(|_| Error::Internal("singular boundary mass matrix".into()))?;
        Ok(TraceProjector { mesh: mesh.clone(), dofs, edges, flux, lu })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Global P2 vector dofs of the returned values.
    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    /// Projects `g(x, side)` and returns values aligned with `dofs()`.
    pub fn project(&self, g: impl Fn([f64; 2], BoundarySide) -> [f64; 2]) -> Vec<f64> {
        let n = self.dofs.len();
        let mut rhs = vec![0.0; n + 1];
        let verts = self.mesh.vertices();
        for &(e, side, idx) in &self.edges {
            let [a, b] = self.mesh.edges()[e].vertices;
            let (pa, pb) = (verts[a], verts[b]);
            let len = self.mesh.edge_length(e);
            for &(s, w) in &GAUSS5 {
                let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                let gv = g(x, side);
                let nb = edge_basis(s);
                for i in 0..3 {
                    for c in 0..2 {
                        rhs[idx[c][i]] += w * len * nb[i] * gv[c];
                    }
                }
            }
        }
        let mut x = self.lu.solve(&rhs);
        x.truncate(n);
        x
    }

    /// Net normal flux of boundary values aligned with `dofs()`.
    pub fn flux(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.flux).map(|(v, f)| v * f).sum()
    }

    /// `int_{boundary} N_k nu` for each boundary unknown.
    pub fn flux_weights(&self) -> &[f64] {
        &self.flux
    }
}

/// One-shot projection of `g` onto the boundary trace space of `mesh`.
pub fn trace_project(
    g: impl Fn([f64; 2], BoundarySide) -> [f64; 2],
    mesh: &Arc<Mesh>,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let p = TraceProjector::new(mesh)?;
    let v = p.project(g);
    Ok((p.dofs().to_vec(), v))
}
