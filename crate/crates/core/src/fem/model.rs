//! Stationary model problems used to verify the spaces and solvers.

use super::assemble::{assemble_form, integrate_p1, p1_load, p2_load, Form};
use super::space::{FeSpace, ScalarField, VectorField};
use super::sparse::{norm2, CscMatrix, SparseLu};
use crate::error::{Error, Result};
use crate::mesh::{quadrature, Mesh};
use std::sync::Arc;

fn push_block(t: &mut Vec<(usize, usize, f64)>, m: &CscMatrix, r0: usize, c0: usize, scale: f64, skip: &[bool]) {
    let p = m.pattern();
    for c in 0..p.ncols() {
        for k in p.col_ptr()[c]..p.col_ptr()[c + 1] {
            let r = p.row_idx()[k];
            if !skip.get(r0 + r).copied().unwrap_or(false) {
                t.push((r0 + r, c0 + c, scale * m.values()[k]));
            }
        }
    }
}

/// P1 solution of `-lap u = f` with `u = g` on the boundary.
pub fn poisson_p1(mesh: &Arc<Mesh>, f: impl Fn([f64; 2]) -> f64, g: impl Fn([f64; 2]) -> f64) -> Result<ScalarField> {
    let n = mesh.num_vertices();
    let k = assemble_form(&Form::Stiffness { c: 1.0 }, mesh)?;
    let mut rhs = p1_load(mesh, 4, |t, l| f(mesh.map_point(t, l)))?;
    let mut fixed = vec![false; n];
    for v in mesh.boundary_vertices() {
        fixed[v] = true;
        rhs[v] = g(mesh.vertices()[v]);
    }
    let mut t = Vec::new();
    push_block(&mut t, &k, 0, 0, 1.0, &fixed);
    t.extend((0..n).filter(|&i| fixed[i]).map(|i| (i, i, 1.0)));
    let a = CscMatrix::from_triplets(n, n, &t);
    let u = SparseLu::factor(&a)?.solve(&rhs);
    ScalarField::new(mesh.clone(), u)
}

/// Taylor–Hood solution of the Stokes problem.
#[derive(Clone, Debug)]
pub struct StokesSolution {
    pub v: VectorField,
    /// Pressure with zero mean.
    pub p: ScalarField,
    /// Euclidean residual of the assembled saddle-point system.
    pub residual: f64,
    /// `max_i |(div v, q_i)|`.
    pub divergence: f64,
}

/// `-nu lap v + grad p = f`, `div v = 0`, `v = g` on the boundary, with the
/// pressure normalized by a mean-value multiplier.
pub fn stokes_th(
    mesh: &Arc<Mesh>,
    nu: f64,
    f: impl Fn([f64; 2]) -> [f64; 2],
    g: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<StokesSolution> {
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!("viscosity must be positive, got {nu}")));
    }
    let p2 = FeSpace::p2(mesh);
    let n2 = p2.n_scalar();
    let nv = 2 * n2;
    let n1 = mesh.num_vertices();
    let n = nv + n1 + 1;
    let a = assemble_form(&Form::VectorStiffness { c: nu }, mesh)?;
    let b = assemble_form(&Form::Divergence, mesh)?;
    let bt = b.transpose();
    let mut rhs = vec![0.0; n];
    rhs[..nv].copy_from_slice(&p2_load(mesh, 6, |t, l| f(mesh.map_point(t, l)))?);
    let mut fixed = vec![false; n];
    for (i, _) in p2.boundary_dofs() {
        let gv = g(p2.dof_point(i));
        for c in 0..2 {
            fixed[c * n2 + i] = true;
            rhs[c * n2 + i] = gv[c];
        }
    }
    let mut t = Vec::new();
    push_block(&mut t, &a, 0, 0, 1.0, &fixed);
    push_block(&mut t, &bt, 0, nv, -1.0, &fixed);
    push_block(&mut t, &b, nv, 0, 1.0, &fixed);
    t.extend((0..nv).filter(|&i| fixed[i]).map(|i| (i, i, 1.0)));
    let ones = p1_load(mesh, 1, |_, _| 1.0)?;
    for (i, &w) in ones.iter().enumerate() {
        t.push((nv + n1, nv + i, w));
        t.push((nv + i, nv + n1, w));
    }
    let m = CscMatrix::from_triplets(n, n, &t);
    let x = SparseLu::factor(&m)?.solve(&rhs);
    let mut r = m.mul_vec(&x);
    r.iter_mut().zip(&rhs).for_each(|(a, b)| *a -= b);
    let v = VectorField::new(mesh.clone(), x[..nv].to_vec())?;
    let divergence = b.mul_vec(&v.values).iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mut p = x[nv..nv + n1].to_vec();
    let mean = integrate_p1(mesh, &p) / mesh.total_area();
    p.iter_mut().for_each(|q| *q -= mean);
    Ok(StokesSolution { v, p: ScalarField::new(mesh.clone(), p)?, residual: norm2(&r), divergence })
}

/// `||u - exact||_{L^2}` for a P1 field.
pub fn l2_error_p1(u: &ScalarField, exact: impl Fn([f64; 2]) -> f64) -> Result<f64> {
    let rule = quadrature(6)?;
    let mesh = &u.mesh;
    let mut s = 0.0;
    for t in 0..mesh.num_triangles() {
        s += rule.integrate(mesh.area(t), |l| (u.eval_local(t, l) - exact(mesh.map_point(t, l))).powi(2));
    }
    Ok(s.sqrt())
}

/// `||v - exact||_{L^2}` for a P2 vector field.
pub fn l2_error_p2(v: &VectorField, exact: impl Fn([f64; 2]) -> [f64; 2]) -> Result<f64> {
    let rule = quadrature(6)?;
    let mesh = &v.mesh;
    let mut s = 0.0;
    for t in 0..mesh.num_triangles() {
        s += rule.integrate(mesh.area(t), |l| {
            let a = v.eval_local(t, l);
            let e = exact(mesh.map_point(t, l));
            (a[0] - e[0]).powi(2) + (a[1] - e[1]).powi(2)
        });
    }
    Ok(s.sqrt())
}

/// L2 errors of the P1 Poisson solution `sin(pi x) sin(pi y)` on uniform
/// `n x n` meshes of the unit square.
pub fn poisson_study(levels: &[usize]) -> Result<Vec<f64>> {
    use std::f64::consts::PI;
    let exact = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
    levels
        .iter()
        .map(|&n| {
            let mesh = Arc::new(crate::mesh::build_rect_mesh(n, n, crate::mesh::Rect::unit())?);
            let u = poisson_p1(&mesh, |x| 2.0 * PI * PI * exact(x), |_| 0.0)?;
            l2_error_p1(&u, exact)
        })
        .collect()
}

/// Errors of a Taylor–Hood Stokes solve with stream function
/// `x^2 (1-x)^2 y^2 (1-y)^2` and pressure `cos(pi x) cos(pi y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StokesErrors {
    pub velocity_l2: f64,
    pub pressure_l2: f64,
    pub divergence: f64,
}

pub fn stokes_study(levels: &[usize]) -> Result<Vec<StokesErrors>> {
    use std::f64::consts::PI;
    let v = |x: [f64; 2]| {
        let [a, b] = x;
        [
            2.0 * a * a * b * (a - 1.0).powi(2) * (b - 1.0) * (2.0 * b - 1.0),
            -2.0 * a * b * b * (a - 1.0) * (2.0 * a - 1.0) * (b - 1.0).powi(2),
        ]
    };
    let p = |x: [f64; 2]| (PI * x[0]).cos() * (PI * x[1]).cos();
    let f = |x: [f64; 2]| {
        let [a, b] = x;
        let (a2, b2) = (a * a, b * b);
        let lap = [
            -4.0 * (2.0 * b - 1.0)
                * (3.0 * a2 * a2 - 6.0 * a2 * a + 6.0 * a2 * b2 - 6.0 * a2 * b + 3.0 * a2 - 6.0 * a * b2
                    + 6.0 * a * b
                    + b2
                    - b),
            4.0 * (2.0 * a - 1.0)
                * (6.0 * a2 * b2 - 6.0 * a2 * b + a2 - 6.0 * a * b2 + 6.0 * a * b - a + 3.0 * b2 * b2 - 6.0 * b2 * b
                    + 3.0 * b2),
        ];
        [lap[0] - PI * (PI * a).sin() * (PI * b).cos(), lap[1] - PI * (PI * a).cos() * (PI * b).sin()]
    };
    levels
        .iter()
        .map(|&n| {
            let mesh = Arc::new(crate::mesh::build_rect_mesh(n, n, crate::mesh::Rect::unit())?);
            let sol = stokes_th(&mesh, 1.0, f, |_| [0.0, 0.0])?;
            Ok(StokesErrors {
                velocity_l2: l2_error_p2(&sol.v, v)?,
                pressure_l2: l2_error_p1(&sol.p, p)?,
                divergence: sol.divergence,
            })
        })
        .collect()
}
