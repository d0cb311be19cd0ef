use super::basis::{p1_at, p1_grad, p2_vec_at, p2_vec_grad, ElementQuad};
use super::space::{FeSpace, ScalarField, VectorField};
use super::sparse::{CscMatrix, Pattern};
use crate::error::{Error, Result};
use crate::material::MaterialLaws;
use crate::mesh::{quadrature, Mesh};
use std::sync::Arc;

/// Bilinear forms available to `assemble_form`.
///
/// Scalar forms act on P1, vector forms on component-major P2.
pub enum Form<'a> {
    /// `(u, v)` on P1.
    Mass,
    /// `c (grad u, grad v)` on P1.
    Stiffness { c: f64 },
    /// `(u, w)` on P2 vectors.
    VectorMass,
    /// `(rho(phi) u, w)` on P2 vectors.
    DensityMass { laws: &'a MaterialLaws, phi: &'a ScalarField },
    /// `(2 eta(phi) Du : Dw)` on P2 vectors.
    Viscous { laws: &'a MaterialLaws, phi: &'a ScalarField },
    /// `(c grad u, grad w)` on P2 vectors, componentwise.
    VectorStiffness { c: f64 },
    /// `-(mu grad phi, w)`: rows P2 vector, columns P1 (trial `mu`).
    Capillary { phi: &'a ScalarField },
    /// `(div v, q)`: rows P1, columns P2 vector.
    Divergence,
}

/// Transport fields for the trilinear form.
pub enum Transport<'a> {
    Velocity(&'a VectorField),
    /// `rho(phi) v - rho_delta b grad mu`.
    Momentum {
        laws: &'a MaterialLaws,
        phi: &'a ScalarField,
        v: &'a VectorField,
        mu: &'a ScalarField,
        b: f64,
    },
}

fn same_mesh(a: &Mesh, b: &Mesh) -> Result<()> {
    if a.id() != b.id() {
        return Err(Error::InvalidArgument(format!(
            "coefficient field lives on mesh {} but assembly mesh is {}",
            b.id(),
            a.id()
        )));
    }
    Ok(())
}

/// Element-coupling pattern between two spaces (rows `test`, columns `trial`).
pub fn coupling_pattern(test: &FeSpace, trial: &FeSpace) -> Pattern {
    let mesh = test.mesh();
    let (rc, cc) = (comps(test), comps(trial));
    let (rn, cn) = (test.n_scalar(), trial.n_scalar());
    let mut cols = vec![Vec::new(); trial.ndof()];
    for t in 0..mesh.num_triangles() {
        let (rd, nr) = test.local_dofs(t);
        let (cd, nc) = trial.local_dofs(t);
        for b in 0..cc {
            for &j in &cd[..nc] {
                let col = &mut cols[b * cn + j];
                for a in 0..rc {
                    for &i in &rd[..nr] {
                        col.push(a * rn + i);
                    }
                }
            }
        }
    }
    Pattern::from_columns(test.ndof(), cols)
}

fn comps(s: &FeSpace) -> usize {
    match s.kind() {
        super::SpaceKind::P2Vector => 2,
        _ => 1,
    }
}

/// Assembles a bilinear form on `mesh` into a sparse matrix with rows
/// indexed by test functions and columns by trial functions.
pub fn assemble_form(form: &Form<'_>, mesh: &Arc<Mesh>) -> Result<CscMatrix> {
    let p1 = FeSpace::p1(mesh);
    let p2 = FeSpace::p2(mesh);
    let (test, trial) = match form {
        Form::Mass | Form::Stiffness { .. } => (&p1, &p1),
        Form::VectorMass | Form::DensityMass { .. } | Form::Viscous { .. } | Form::VectorStiffness { .. } => (&p2, &p2),
        Form::Capillary { .. } => (&p2, &p1),
        Form::Divergence => (&p1, &p2),
    };
    match form {
        Form::DensityMass { phi, .. } | Form::Viscous { phi, .. } | Form::Capillary { phi } => {
            same_mesh(mesh, &phi.mesh)?
        }
        _ => {}
    }
    let mut a = CscMatrix::zeros(Arc::new(coupling_pattern(test, trial)));
    let rule = quadrature(5)?;
    let mut eq = ElementQuad::new(&rule);
    let n2 = p2.n_scalar();
    let mut local = [[0.0; 12]; 12];
    for t in 0..mesh.num_triangles() {
        eq.reinit(mesh, t, &rule);
        let tri = mesh.triangles()[t];
        let (d2, _) = p2.local_dofs(t);
        for row in local.iter_mut() {
            row.fill(0.0);
        }
        for q in 0..eq.len() {
            let jw = eq.jw[q];
            let l = eq.l[q];
            let n = &eq.n2[q];
            let dn = &eq.dn2[q];
            let dl = &eq.dl;
            match form {
                Form::Mass => {
                    for i in 0..3 {
                        for j in 0..3 {
                            local[i][j] += jw * l[i] * l[j];
                        }
                    }
                }
                Form::Stiffness { c } => {
                    for i in 0..3 {
                        for j in 0..3 {
                            local[i][j] += jw * c * (dl[i][0] * dl[j][0] + dl[i][1] * dl[j][1]);
                        }
                    }
                }
                Form::VectorMass | Form::DensityMass { .. } => {
                    let w = match form {
                        Form::DensityMass { laws, phi } => laws.density(p1_at(&phi.values, &tri, l)),
                        _ => 1.0,
                    };
                    for i in 0..6 {
                        for j in 0..6 {
                            let v = jw * w * n[i] * n[j];
                            local[i][j] += v;
                            local[6 + i][6 + j] += v;
                        }
                    }
                }
                Form::VectorStiffness { c } => {
                    for i in 0..6 {
                        for j in 0..6 {
                            let v = jw * c * (dn[i][0] * dn[j][0] + dn[i][1] * dn[j][1]);
                            local[i][j] += v;
                            local[6 + i][6 + j] += v;
                        }
                    }
                }
                Form::Viscous { laws, phi } => {
                    let eta = laws.viscosity(p1_at(&phi.values, &tri, l));
                    viscous_block(&mut local, jw * eta, dn);
                }
                Form::Capillary { phi } => {
                    let gp = p1_grad(&phi.values, &tri, dl);
                    for i in 0..6 {
                        for j in 0..3 {
                            local[i][j] -= jw * l[j] * gp[0] * n[i];
                            local[6 + i][j] -= jw * l[j] * gp[1] * n[i];
                        }
                    }
                }
                Form::Divergence => {
                    for i in 0..3 {
                        for j in 0..6 {
                            local[i][j] += jw * l[i] * dn[j][0];
                            local[i][6 + j] += jw * l[i] * dn[j][1];
                        }
                    }
                }
            }
        }
        scatter(&mut a, &local, test, trial, &tri, &d2, n2);
    }
    Ok(a)
}

/// Adds `s * (delta_cd grad N_j . grad N_i + d_c N_j d_d N_i)` to the
/// vector block, which is `2 s Du:Dw` for `u = N_j e_d`, `w = N_i e_c`.
#[inline]
pub(crate) fn viscous_block(local: &mut [[f64; 12]; 12], s: f64, dn: &[[f64; 2]; 6]) {
    for i in 0..6 {
        for j in 0..6 {
            let gg = dn[i][0] * dn[j][0] + dn[i][1] * dn[j][1];
            for c in 0..2 {
                for d in 0..2 {
                    let mut v = dn[j][c] * dn[i][d];
                    if c == d {
                        v += gg;
                    }
                    local[6 * c + i][6 * d + j] += s * v;
                }
            }
        }
    }
}

fn scatter(
    a: &mut CscMatrix,
    local: &[[f64; 12]; 12],
    test: &FeSpace,
    trial: &FeSpace,
    tri: &[usize; 3],
    d2: &[usize; 6],
    n2: usize,
) {
    let map = |s: &FeSpace, k: usize| -> usize {
        match s.kind() {
            super::SpaceKind::P2Vector => (k / 6) * n2 + d2[k % 6],
            _ => tri[k],
        }
    };
    let nr = if comps(test) == 2 { 12 } else { 3 };
    let nc = if comps(trial) == 2 { 12 } else { 3 };
    for i in 0..nr {
        for j in 0..nc {
            let v = local[i][j];
            if v != 0.0 {
                a.add(map(test, i), map(trial, j), v);
            }
        }
    }
}

/// Matrix of `a(u, v, w) = 1/2 ((u.grad) v, w) - 1/2 ((u.grad) w, v)` with
/// rows indexed by `w` and columns by `v`, both P2 vectors.
pub fn assemble_trilinear(transport: &Transport<'_>, mesh: &Arc<Mesh>) -> Result<CscMatrix> {
    let p2 = FeSpace::p2(mesh);
    match transport {
        Transport::Velocity(u) => same_mesh(mesh, &u.mesh)?,
        Transport::Momentum { phi, v, mu, .. } => {
            same_mesh(mesh, &phi.mesh)?;
            same_mesh(mesh, &v.mesh)?;
            same_mesh(mesh, &mu.mesh)?;
        }
    }
    let mut a = CscMatrix::zeros(Arc::new(coupling_pattern(&p2, &p2)));
    let rule = quadrature(5)?;
    let mut eq = ElementQuad::new(&rule);
    let n2 = p2.n_scalar();
    let mut local = [[0.0; 12]; 12];
    for t in 0..mesh.num_triangles() {
        eq.reinit(mesh, t, &rule);
        let tri = mesh.triangles()[t];
        let (d2, _) = p2.local_dofs(t);
        for row in local.iter_mut() {
            row.fill(0.0);
        }
        for q in 0..eq.len() {
            let n = &eq.n2[q];
            let dn = &eq.dn2[q];
            let u = match transport {
                Transport::Velocity(u) => p2_vec_at(&u.values, n2, &d2, n),
                Transport::Momentum { laws, phi, v, mu, b } => {
                    let rho = laws.density(p1_at(&phi.values, &tri, eq.l[q]));
                    let vv = p2_vec_at(&v.values, n2, &d2, n);
                    let gm = p1_grad(&mu.values, &tri, &eq.dl);
                    let j = -laws.rho_delta() * b;
                    [rho * vv[0] + j * gm[0], rho * vv[1] + j * gm[1]]
                }
            };
            trilinear_block(&mut local, eq.jw[q], u, n, dn);
        }
        scatter(&mut a, &local, &p2, &p2, &tri, &d2, n2);
    }
    Ok(a)
}

/// Adds the skew convection block for transport `u` at one quadrature point.
#[inline]
pub(crate) fn trilinear_block(local: &mut [[f64; 12]; 12], jw: f64, u: [f64; 2], n: &[f64; 6], dn: &[[f64; 2]; 6]) {
    let mut ug = [0.0; 6];
    for k in 0..6 {
        ug[k] = u[0] * dn[k][0] + u[1] * dn[k][1];
    }
    for i in 0..6 {
        for j in 0..6 {
            let v = 0.5 * jw * (ug[j] * n[i] - ug[i] * n[j]);
            local[i][j] += v;
            local[6 + i][6 + j] += v;
        }
    }
}

/// Consistent P1 mass matrix.
pub fn p1_mass(mesh: &Arc<Mesh>) -> Result<CscMatrix> {
    assemble_form(&Form::Mass, mesh)
}

pub fn p1_stiffness(mesh: &Arc<Mesh>) -> Result<CscMatrix> {
    assemble_form(&Form::Stiffness { c: 1.0 }, mesh)
}

/// `int phi` for a P1 field.
pub fn integrate_p1(mesh: &Mesh, values: &[f64]) -> f64 {
    let mut s = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        s += mesh.area(t) * (values[tri[0]] + values[tri[1]] + values[tri[2]]) / 3.0;
    }
    s
}

/// `(v, psi_i)` for each P1 basis function, with `v` given as a function of
/// triangle and barycentrics.
pub fn p1_load(mesh: &Arc<Mesh>, order: usize, f: impl Fn(usize, [f64; 3]) -> f64) -> Result<Vec<f64>> {
    let rule = quadrature(order)?;
    let mut out = vec![0.0; mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles()[t];
        let jw0 = 2.0 * mesh.area(t);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let fv = f(t, *l) * jw0 * w;
            for i in 0..3 {
                out[tri[i]] += fv * l[i];
            }
        }
    }
    Ok(out)
}

/// `(f, w)` for each P2 vector basis function.
pub fn p2_load(mesh: &Arc<Mesh>, order: usize, f: impl Fn(usize, [f64; 3]) -> [f64; 2]) -> Result<Vec<f64>> {
    let p2 = FeSpace::p2(mesh);
    let n2 = p2.n_scalar();
    let rule = quadrature(order)?;
    let mut out = vec![0.0; 2 * n2];
    for t in 0..mesh.num_triangles() {
        let (d2, _) = p2.local_dofs(t);
        let jw0 = 2.0 * mesh.area(t);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let fv = f(t, *l);
            let n = super::basis::p2_values(*l);
            for k in 0..6 {
                out[d2[k]] += fv[0] * n[k] * jw0 * w;
                out[n2 + d2[k]] += fv[1] * n[k] * jw0 * w;
            }
        }
    }
    Ok(out)
}

/// `grad v` of a P2 field at barycentric point `l` of triangle `t`.
pub fn p2_gradient_at(v: &VectorField, t: usize, l: [f64; 3]) -> [[f64; 2]; 2] {
    let p2 = FeSpace::p2(&v.mesh);
    let (d2, _) = p2.local_dofs(t);
    let dl = v.mesh.barycentric_gradients(t);
    let dn = super::basis::p2_gradients(l, &dl);
    p2_vec_grad(&v.values, v.n_scalar(), &d2, &dn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::sparse::dot;
    use crate::mesh::{build_rect_mesh, Rect};

    fn mesh(nx: usize, ny: usize) -> Arc<Mesh> {
        Arc::new(build_rect_mesh(nx, ny, Rect::new(0.0, 0.0, 1.0, 1.5)).unwrap())
    }

    #[test]
    fn mass_rows_sum_to_patch_areas() {
        let m = mesh(3, 4);
        let a = assemble_form(&Form::Mass, &m).unwrap();
        let ones = vec![1.0; m.num_vertices()];
        let rows = a.mul_vec(&ones);
        assert!((rows.iter().sum::<f64>() - 1.5).abs() < 1e-13);
        let mut patch = vec![0.0; m.num_vertices()];
        for (t, tri) in m.triangles().iter().enumerate() {
            for &v in tri {
                patch[v] += m.area(t) / 3.0;
            }
        }
        for (r, p) in rows.iter().zip(&patch) {
            assert!((r - p).abs() < 1e-14);
        }
    }

    #[test]
    fn stiffness_kills_constants() {
        let m = mesh(3, 4);
        let a = assemble_form(&Form::Stiffness { c: 2.0 }, &m).unwrap();
        let r = a.mul_vec(&vec![1.0; m.num_vertices()]);
        assert!(r.iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn viscous_energy_of_shear() {
        let m = mesh(2, 3);
        let laws = MaterialLaws::new(1.0, 1.0, 1.0, 1.0, -1.0, 1.0).unwrap();
        let phi = ScalarField::constant(&m, 0.0);
        let a = assemble_form(&Form::Viscous { laws: &laws, phi: &phi }, &m).unwrap();
        let v = VectorField::from_fn(&m, |p| [p[1], 0.0]);
        let e = dot(&v.values, &a.mul_vec(&v.values));
        assert!((e - 1.5).abs() < 1e-12);
    }

    #[test]
    fn trilinear_hand_value() {
        let m = Arc::new(build_rect_mesh(2, 2, Rect::unit()).unwrap());
        let u = VectorField::from_fn(&m, |_| [1.0, 0.0]);
        let a = assemble_trilinear(&Transport::Velocity(&u), &m).unwrap();
        let v = VectorField::from_fn(&m, |p| [p[0], 0.0]);
        let w = VectorField::from_fn(&m, |_| [1.0, 0.0]);
        let val = dot(&w.values, &a.mul_vec(&v.values));
        assert!((val - 0.5).abs() < 1e-13);
    }

    #[test]
    fn mesh_mismatch_rejected() {
        let m1 = mesh(2, 2);
        let m2 = mesh(2, 2);
        let laws = MaterialLaws::new(1.0, 1.0, 1.0, 1.0, -1.0, 1.0).unwrap();
        let phi = ScalarField::constant(&m2, 0.0);
        assert!(assemble_form(&Form::DensityMass { laws: &laws, phi: &phi }, &m1).is_err());
    }
}
