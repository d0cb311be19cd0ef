use super::basis::p2_values;
use super::space::{FeSpace, ScalarField, VectorField};
use super::sparse::CscMatrix;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, PointLocator};
use std::sync::Arc;

fn locate_all(source: &Mesh, points: impl Iterator<Item = [f64; 2]>) -> Result<Vec<(usize, [f64; 3])>> {
    let loc = PointLocator::new(source);
    points
        .map(|p| {
            loc.locate(source, p).ok_or_else(|| {
                Error::Internal(format!("point ({}, {}) not covered by source mesh {}", p[0], p[1], source.id()))
            })
        })
        .collect()
}

/// Nodal P1 interpolation matrix from `source` to `target` (rows target
/// vertices, columns source vertices).
pub fn p1_interpolation_matrix(source: &Mesh, target: &Mesh) -> Result<CscMatrix> {
    let hits = locate_all(source, target.vertices().iter().copied())?;
    let mut t = Vec::with_capacity(3 * hits.len());
    for (i, (tri, l)) in hits.into_iter().enumerate() {
        let vs = source.triangles()[tri];
        for k in 0..3 {
            if l[k] != 0.0 {
                t.push((i, vs[k], l[k]));
            }
        }
    }
    Ok(CscMatrix::from_triplets(target.num_vertices(), source.num_vertices(), &t))
}

/// Nodal P2 interpolation matrix for one scalar component.
pub fn p2_interpolation_matrix(source: &Arc<Mesh>, target: &Arc<Mesh>) -> Result<CscMatrix> {
    let ts = FeSpace::p2(target);
    let ss = FeSpace::p2(source);
    let hits = locate_all(source, (0..ts.n_scalar()).map(|i| ts.dof_point(i)))?;
    let mut t = Vec::with_capacity(6 * hits.len());
    for (i, (tri, l)) in hits.into_iter().enumerate() {
        let (d, _) = ss.local_dofs(tri);
        let n = p2_values(l);
        for k in 0..6 {
            if n[k].abs() > 1e-15 {
                t.push((i, d[k], n[k]));
            }
        }
    }
    Ok(CscMatrix::from_triplets(ts.n_scalar(), ss.n_scalar(), &t))
}

/// Nodal interpolation of a continuous P1 field onto `target`.
pub fn interpolate(source: &ScalarField, target: &Arc<Mesh>) -> Result<ScalarField> {
    if source.mesh.id() == target.id() {
        return Ok(source.clone());
    }
    let m = p1_interpolation_matrix(&source.mesh, target)?;
    Ok(ScalarField { mesh: target.clone(), values: m.mul_vec(&source.values) })
}

pub fn interpolate_vector(source: &VectorField, target: &Arc<Mesh>) -> Result<VectorField> {
    if source.mesh.id() == target.id() {
        return Ok(source.clone());
    }
    let m = p2_interpolation_matrix(&source.mesh, target)?;
    let ns = source.n_scalar();
    let mut values = m.mul_vec(&source.values[..ns]);
    values.extend(m.mul_vec(&source.values[ns..]));
    Ok(VectorField { mesh: target.clone(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{bisect, build_rect_mesh, Rect};

    #[test]
    fn same_mesh_is_identity() {
        let m = Arc::new(build_rect_mesh(3, 3, Rect::unit()).unwrap());
        let f = ScalarField::from_fn(&m, |p| p[0] * p[1]);
        let g = interpolate(&f, &m).unwrap();
        assert_eq!(f.values, g.values);
    }

    #[test]
    fn linears_exact_on_refined_mesh() {
        let m = Arc::new(build_rect_mesh(3, 3, Rect::unit()).unwrap());
        let all: Vec<usize> = (0..m.num_triangles()).collect();
        let r = Arc::new(bisect(&m, &all).unwrap());
        let f = ScalarField::from_fn(&m, |p| p[0] + 2.0 * p[1]);
        let g = interpolate(&f, &r).unwrap();
        for (v, p) in g.values.iter().zip(r.vertices()) {
            assert!((v - (p[0] + 2.0 * p[1])).abs() < 1e-14);
        }
        let back = interpolate(&g, &m).unwrap();
        for (a, b) in back.values.iter().zip(&f.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratics_exact_for_p2() {
        let m = Arc::new(build_rect_mesh(2, 2, Rect::unit()).unwrap());
        let r = Arc::new(bisect(&m, &[0, 3]).unwrap());
        let f = VectorField::from_fn(&m, |p| [p[0] * p[1], p[0] * p[0] - p[1]]);
        let g = interpolate_vector(&f, &r).unwrap();
        let exact = VectorField::from_fn(&r, |p| [p[0] * p[1], p[0] * p[0] - p[1]]);
        for (a, b) in g.values.iter().zip(&exact.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
