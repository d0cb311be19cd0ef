//! Gradient-jump error indicators, Dörfler marking with cell volume bounds
//! and the mesh adaptation loops for states and the initial control.

use crate::control::project_admissible;
use crate::error::{Error, Result};
use crate::fem::basis::p2_gradients;
use crate::fem::{FeSpace, ScalarField};
use crate::forward::FieldState;
use crate::mesh::{bisect, Mesh};
use std::sync::Arc;

/// Per-triangle indicator values.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorField {
    pub values: Vec<f64>,
}

impl IndicatorField {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptConfig {
    /// Dörfler fraction.
    pub theta: f64,
    /// Largest admissible cell area.
    pub v_max: f64,
    /// Smallest admissible cell area.
    pub v_min: f64,
    /// Mark-and-bisect rounds per adaptation.
    pub max_rounds: usize,
}

impl AdaptConfig {
    pub fn new(theta: f64, v_max: f64, v_min: f64) -> Result<Self> {
        let c = AdaptConfig { theta, v_max, v_min, max_rounds: 40 };
        c.validate()?;
        Ok(c)
    }

    /// Bounds resolving an interface of width `pi eps` with eight cells.
    pub fn for_interface(eps: f64) -> Result<Self> {
        let h = std::f64::consts::PI * eps / 8.0;
        AdaptConfig::new(0.5, 3e-4, 0.5 * h * h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!("Dörfler fraction must lie in (0, 1], got {}", self.theta)));
        }
        if !(self.v_min > 0.0 && self.v_min < self.v_max) {
            return Err(Error::Config(format!(
                "cell volume bounds need 0 < V_min < V_max, got {} and {}",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }

    /// A cell whose halves would fall below `v_min` is not refined further.
    pub fn at_floor(&self, area: f64) -> bool {
        0.5 * area < self.v_min * (1.0 - 1e-12)
    }
}

/// Gradients of a field on both sides of every edge, sampled at two Gauss
/// points. Returns per edge `h_e * int_e |[grad u . n]|^2`.
fn edge_jumps(mesh: &Mesh, grad: &dyn Fn(usize, [f64; 3]) -> Vec<[f64; 2]>) -> Vec<f64> {
    let g = 0.5 / 3f64.sqrt();
    let pts = [0.5 - g, 0.5 + g];
    let tris = mesh.triangles();
    let verts = mesh.vertices();
    let mut out = vec![0.0; mesh.num_edges()];
    for (e, edge) in mesh.edges().iter().enumerate() {
        let Some(t2) = edge.triangles.1 else { continue };
        let t1 = edge.triangles.0;
        let [a, b] = edge.vertices;
        let (pa, pb) = (verts[a], verts[b]);
        let len = mesh.edge_length(e);
        let n = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
        let bary = |t: usize, s: f64| {
            let mut l = [0.0; 3];
            for k in 0..3 {
                if tris[t][k] == a {
                    l[k] = 1.0 - s;
                } else if tris[t][k] == b {
                    l[k] = s;
                }
            }
            l
        };
        let mut acc = 0.0;
        for &s in &pts {
            let g1 = grad(t1, bary(t1, s));
            let g2 = grad(t2, bary(t2, s));
            for (x, y) in g1.iter().zip(&g2) {
                let j = (x[0] - y[0]) * n[0] + (x[1] - y[1]) * n[1];
                acc += 0.5 * len * j * j;
            }
        }
        out[e] = len * acc;
    }
    out
}

fn cell_sum(mesh: &Mesh, per_edge: &[f64]) -> IndicatorField {
    let values = mesh.triangle_edges().iter().map(|es| es.iter().map(|&e| per_edge[e]).sum()).collect();
    IndicatorField { values }
}

/// `eta_T = sum_e h_e (|[grad phi.n]|^2 + |[grad mu.n]|^2 + |[grad v.n]|^2)_e`
/// over the interior edges of `T`, given P1 fields and an optional P2 vector.
pub fn gradient_jump_indicator(mesh: &Arc<Mesh>, p1: &[&[f64]], p2_vec: Option<&[f64]>) -> IndicatorField {
    let space = FeSpace::p2(mesh);
    let n2 = space.n_scalar();
    let grad = |t: usize, l: [f64; 3]| {
        let tri = mesh.triangles()[t];
        let dl = mesh.barycentric_gradients(t);
        let mut out = Vec::with_capacity(p1.len() + 2);
        for f in p1 {
            let mut g = [0.0; 2];
            for k in 0..3 {
                g[0] += f[tri[k]] * dl[k][0];
                g[1] += f[tri[k]] * dl[k][1];
            }
            out.push(g);
        }
        if let Some(v) = p2_vec {
            let (d, _) = space.local_dofs(t);
            let dn = p2_gradients(l, &dl);
            for c in 0..2 {
                let mut g = [0.0; 2];
                for k in 0..6 {
                    g[0] += v[c * n2 + d[k]] * dn[k][0];
                    g[1] += v[c * n2 + d[k]] * dn[k][1];
                }
                out.push(g);
            }
        }
        out
    };
    cell_sum(mesh, &edge_jumps(mesh, &grad))
}

/// Indicator of a complete state.
pub fn jump_indicator(state: &FieldState) -> IndicatorField {
    gradient_jump_indicator(&state.mesh, &[&state.phi, &state.mu], Some(&state.v))
}

/// Greedy Dörfler marking by descending indicator. Cells at the volume floor
/// count towards the fraction but are never marked; cells above `v_max` are
/// always marked.
pub fn doerfler_mark(eta: &IndicatorField, theta: f64, config: &AdaptConfig, mesh: &Mesh) -> Vec<usize> {
    let n = eta.values.len();
    let total = eta.total();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eta.values[b].total_cmp(&eta.values[a]).then(a.cmp(&b)));
    let mut marked = vec![false; n];
    let mut sum = 0.0;
    if total > 0.0 {
        for &t in &order {
            if sum >= theta * total || eta.values[t] <= 0.0 {
                break;
            }
            sum += eta.values[t];
            if !config.at_floor(mesh.area(t)) {
                marked[t] = true;
            }
        }
    }
    for (t, m) in marked.iter_mut().enumerate() {
        if mesh.area(t) > config.v_max {
            *m = true;
        }
    }
    (0..n).filter(|&t| marked[t]).collect()
}

/// Refines `base` until marking selects nothing. `indicator` evaluates the
/// indicator on a candidate mesh.
fn refine_from(
    base: &Arc<Mesh>,
    config: &AdaptConfig,
    mut indicator: impl FnMut(&Arc<Mesh>) -> Result<IndicatorField>,
) -> Result<Arc<Mesh>> {
    config.validate()?;
    let mut mesh = base.clone();
    for _ in 0..config.max_rounds {
        let eta = indicator(&mesh)?;
        let marked = doerfler_mark(&eta, config.theta, config, &mesh);
        if marked.is_empty() {
            break;
        }
        mesh = Arc::new(bisect(&mesh, &marked)?);
    }
    Ok(mesh)
}

/// New mesh for the next time level, rebuilt from `base` by repeated marking
/// against `state`, together with the state interpolated to it.
pub fn adapt_step_mesh(state: &FieldState, base: &Arc<Mesh>, config: &AdaptConfig) -> Result<(Arc<Mesh>, FieldState)> {
    let mesh = refine_from(base, config, |m| Ok(jump_indicator(&state.transfer(m)?)))?;
    if mesh.num_triangles() == state.mesh.num_triangles() && same_geometry(&mesh, &state.mesh) {
        return Ok((state.mesh.clone(), state.clone()));
    }
    let moved = state.transfer(&mesh)?;
    Ok((mesh, moved))
}

fn same_geometry(a: &Mesh, b: &Mesh) -> bool {
    a.vertices() == b.vertices() && a.triangles() == b.triangles()
}

/// New control mesh for the initial phase field, refined from `base` by the
/// jumps of `grad u_I`; the transferred field is projected back onto the
/// admissible set with the given mean.
pub fn adapt_control_mesh(
    u_i: &ScalarField,
    base: &Arc<Mesh>,
    config: &AdaptConfig,
    mean: f64,
) -> Result<(Arc<Mesh>, ScalarField)> {
    let mesh = refine_from(base, config, |m| {
        let f = crate::fem::interpolate(u_i, m)?;
        Ok(gradient_jump_indicator(m, &[&f.values], None))
    })?;
    if same_geometry(&mesh, &u_i.mesh) {
        return Ok((u_i.mesh.clone(), u_i.clone()));
    }
    let mut moved = crate::fem::interpolate(u_i, &mesh)?;
    project_admissible(&mut moved, mean)?;
    Ok((mesh, moved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_mesh, Rect};

    fn unit(n: usize) -> Arc<Mesh> {
        Arc::new(build_rect_mesh(n, n, Rect::unit()).unwrap())
    }

    #[test]
    fn linear_fields_have_no_jumps() {
        let mesh = unit(6);
        let phi: Vec<f64> = mesh.vertices().iter().map(|x| 2.0 * x[0] - x[1]).collect();
        let mu: Vec<f64> = mesh.vertices().iter().map(|x| x[1]).collect();
        let eta = gradient_jump_indicator(&mesh, &[&phi, &mu], None);
        assert!(eta.values.iter().all(|v| v.abs() < 1e-24));
    }

    #[test]
    fn kink_concentrates_on_crossing_cells() {
        let mesh = unit(16);
        let phi: Vec<f64> = mesh.vertices().iter().map(|x| (x[0] - 0.5).abs()).collect();
        let eta = gradient_jump_indicator(&mesh, &[&phi], None);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let on_kink = tri.iter().any(|&v| (mesh.vertices()[v][0] - 0.5).abs() < 1e-12);
            if !on_kink {
                assert!(eta.values[t].abs() < 1e-20);
            }
        }
        assert!(eta.total() > 0.0);
    }

    #[test]
    fn uniform_indicator_marks_half() {
        let mesh = unit(4);
        let n = mesh.num_triangles();
        let cfg = AdaptConfig::new(0.5, 1.0, 1e-6).unwrap();
        let eta = IndicatorField { values: vec![1.0; n] };
        assert_eq!(doerfler_mark(&eta, 0.5, &cfg, &mesh).len(), n.div_ceil(2));
        let floor = AdaptConfig::new(0.5, 1.0, 0.9 * mesh.area(0)).unwrap();
        assert!(doerfler_mark(&eta, 0.5, &floor, &mesh).is_empty());
    }

    #[test]
    fn volume_cap_forces_marking() {
        let mesh = unit(2);
        let cfg = AdaptConfig::new(0.5, 0.5 * mesh.area(0), 1e-6).unwrap();
        let eta = IndicatorField { values: vec![0.0; mesh.num_triangles()] };
        assert_eq!(doerfler_mark(&eta, 0.5, &cfg, &mesh).len(), mesh.num_triangles());
    }

    #[test]
    fn constant_control_is_not_refined() {
        let mesh = unit(4);
        let u = ScalarField::constant(&mesh, 0.25);
        let cfg = AdaptConfig::new(0.5, 1.0, 1e-4).unwrap();
        let (m, v) = adapt_control_mesh(&u, &mesh, &cfg, 0.25).unwrap();
        assert_eq!(m.id(), mesh.id());
        assert_eq!(v.values, u.values);
    }
}
