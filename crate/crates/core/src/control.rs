//! Control space, bump ansatz functions, control operators and the control
//! part of the objective.

use crate::error::{Error, Result};
use crate::fem::{p1_stiffness, p2_load, ScalarField, TraceProjector, VectorField};
use crate::material::double_obstacle_cost;
use crate::mesh::{BoundarySide, Mesh};
use std::sync::Arc;

/// `cos^2((pi/2) |xi^-1 (x - m)|)` in component `c` inside the unit ellipse.
pub fn bump_eval(center: [f64; 2], xi: [f64; 2], c: usize, x: [f64; 2]) -> [f64; 2] {
    let r = (((x[0] - center[0]) / xi[0]).powi(2) + ((x[1] - center[1]) / xi[1]).powi(2)).sqrt();
    let mut out = [0.0; 2];
    if r < 1.0 {
        out[c] = (std::f64::consts::FRAC_PI_2 * r).cos().powi(2);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Placement {
    Volume,
    /// Supported on one boundary segment only.
    Boundary(BoundarySide),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ansatz {
    pub center: [f64; 2],
    pub width: [f64; 2],
    pub component: usize,
    pub placement: Placement,
}

impl Ansatz {
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        bump_eval(self.center, self.width, self.component, x)
    }

    /// Boundary value on `side`; zero off the ansatz's own segment.
    pub fn eval_boundary(&self, x: [f64; 2], side: BoundarySide) -> [f64; 2] {
        match self.placement {
            Placement::Boundary(s) if s == side => self.eval(x),
            _ => [0.0, 0.0],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnsatzSet {
    pub items: Vec<Ansatz>,
}

impl AnsatzSet {
    pub fn new(items: Vec<Ansatz>) -> Result<Self> {
        for (l, a) in items.iter().enumerate() {
            if a.component > 1 || !(a.width[0] > 0.0 && a.width[1] > 0.0) {
                return Err(Error::Config(format!(
                    "ansatz {l}: component must be 0 or 1 and widths positive, got {a:?}"
                )));
            }
            if let Placement::Boundary(side) = a.placement {
                if a.component != side.tangential_component() {
                    return Err(Error::Config(format!(
                        "boundary ansatz {l} on {side:?} is not tangential (component {})",
                        a.component
                    )));
                }
            }
        }
        Ok(AnsatzSet { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `n` equidistant bumps along `side` of `extent`, each of half-width
    /// `len / n` along the segment.
    pub fn wall_bumps(extent: &crate::mesh::Rect, side: BoundarySide, n: usize) -> Vec<Ansatz> {
        let c = side.tangential_component();
        let (a0, a1) = if c == 1 { (extent.y0, extent.y1) } else { (extent.x0, extent.x1) };
        let w = (a1 - a0) / n as f64;
        (0..n)
            .map(|i| {
                let s = a0 + (i as f64 + 0.5) * w;
                let center = match side {
                    BoundarySide::Left => [extent.x0, s],
                    BoundarySide::Right => [extent.x1, s],
                    BoundarySide::Bottom => [s, extent.y0],
                    BoundarySide::Top => [s, extent.y1],
                };
                Ansatz { center, width: [w, w], component: c, placement: Placement::Boundary(side) }
            })
            .collect()
    }

    /// Volume bumps on an `nx x ny` grid of centers, both components each.
    pub fn volume_grid(extent: &crate::mesh::Rect, nx: usize, ny: usize, width: f64) -> Vec<Ansatz> {
        let mut out = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let center = [
                    extent.x0 + (i as f64 + 0.5) * extent.width() / nx as f64,
                    extent.y0 + (j as f64 + 0.5) * extent.height() / ny as f64,
                ];
                for c in 0..2 {
                    out.push(Ansatz { center, width: [width, width], component: c, placement: Placement::Volume });
                }
            }
        }
        out
    }
}

/// Cost weights; `alpha_i + alpha_v + alpha_b = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlWeights {
    pub alpha: f64,
    pub alpha_i: f64,
    pub alpha_v: f64,
    pub alpha_b: f64,
}

impl ControlWeights {
    pub fn new(alpha: f64, alpha_i: f64, alpha_v: f64, alpha_b: f64) -> Result<Self> {
        if !(alpha >= 0.0) || [alpha_i, alpha_v, alpha_b].iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config(format!(
                "weights must be non-negative, got alpha={alpha} ({alpha_i}, {alpha_v}, {alpha_b})"
            )));
        }
        let s = alpha_i + alpha_v + alpha_b;
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("alpha_I + alpha_V + alpha_B must be 1, got {s}")));
        }
        Ok(ControlWeights { alpha, alpha_i, alpha_v, alpha_b })
    }
}

/// Piecewise-constant vector-valued function on a uniform grid of `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub horizon: f64,
    /// `samples[k][l]`: channel `l` on `[k dt, (k+1) dt)`.
    pub samples: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn zeros(horizon: f64, n_samples: usize, channels: usize) -> Self {
        TimeSeries { horizon, samples: vec![vec![0.0; channels]; n_samples] }
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn channels(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.samples.len().max(1) as f64
    }

    /// Overlaps `(k, |[t0, t1] ∩ I_k|)` with the sample intervals.
    pub fn overlaps(&self, t0: f64, t1: f64) -> Vec<(usize, f64)> {
        let n = self.samples.len();
        if n == 0 {
            return Vec::new();
        }
        let dt = self.dt();
        let k0 = ((t0 / dt).floor().max(0.0) as usize).min(n - 1);
        let mut out = Vec::new();
        for k in k0..n {
            let a = k as f64 * dt;
            let b = if k + 1 == n { self.horizon } else { (k + 1) as f64 * dt };
            if a >= t1 {
                break;
            }
            let w = b.min(t1) - a.max(t0);
            if w > 1e-14 * self.horizon {
                out.push((k, w));
            }
        }
        out
    }

    /// Mean value over `[t0, t1]`.
    pub fn average(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.channels()];
        for (k, w) in self.overlaps(t0, t1) {
            for (o, s) in out.iter_mut().zip(&self.samples[k]) {
                *o += w * s;
            }
        }
        let len = t1 - t0;
        out.iter_mut().for_each(|o| *o /= len);
        out
    }

    /// `(a, b)_{L2(0,T)}`
    pub fn l2_inner(&self, other: &TimeSeries) -> Result<f64> {
        if self.samples.len() != other.samples.len() || self.channels() != other.channels() {
            return Err(Error::InvalidArgument(format!(
                "time series shapes differ: {}x{} vs {}x{}",
                self.n_samples(),
                self.channels(),
                other.n_samples(),
                other.channels()
            )));
        }
        let dt = self.dt();
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| dt * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum())
    }

    /// Splits every sample into `factor` equal samples; the function is unchanged.
    pub fn refine(&self, factor: usize) -> TimeSeries {
        let mut samples = Vec::with_capacity(self.samples.len() * factor);
        for s in &self.samples {
            for _ in 0..factor {
                samples.push(s.clone());
            }
        }
        TimeSeries { horizon: self.horizon, samples }
    }

    pub fn axpy(&mut self, a: f64, x: &TimeSeries) {
        for (s, xs) in self.samples.iter_mut().zip(&x.samples) {
            for (v, xv) in s.iter_mut().zip(xs) {
                *v += a * xv;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.samples.iter_mut().flatten().for_each(|v| *v *= a);
    }

    /// Euclidean norm of the channel vector per sample.
    pub fn norms(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }
}

/// The control triple.
#[derive(Clone, Debug)]
pub struct Control {
    /// Initial phase field on its control mesh; `None` when the scenario's
    /// own initial phase field is used.
    pub u_i: Option<ScalarField>,
    pub u_v: TimeSeries,
    pub u_b: TimeSeries,
}

impl Control {
    pub fn zeros(horizon: f64, n_samples: usize, n_v: usize, n_b: usize) -> Self {
        Control {
            u_i: None,
            u_v: TimeSeries::zeros(horizon, n_samples, n_v),
            u_b: TimeSeries::zeros(horizon, n_samples, n_b),
        }
    }

    pub fn check_admissible(&self, mean: f64) -> Result<()> {
        if let Some(u) = &self.u_i {
            if let Some(v) = u.values.iter().find(|v| v.abs() > 1.0 + 1e-12) {
                return Err(Error::ConstraintViolation(format!("|u_I| <= 1 violated (value {v})")));
            }
            let area = u.mesh.extent().area();
            let m = crate::fem::integrate_p1(&u.mesh, &u.values) / area;
            if (m - mean).abs() > 1e-10 {
                return Err(Error::ConstraintViolation(format!("u_I mean {m} differs from {mean}")));
            }
        }
        for s in self.u_v.samples.iter().chain(&self.u_b.samples) {
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::ConstraintViolation("non-finite control coefficient".into()));
            }
        }
        Ok(())
    }

    /// `self += a * x` for the time-dependent parts and, when both carry one,
    /// the initial field.
    pub fn axpy(&mut self, a: f64, x: &Control) {
        self.u_v.axpy(a, &x.u_v);
        self.u_b.axpy(a, &x.u_b);
        if let (Some(u), Some(xu)) = (self.u_i.as_mut(), x.u_i.as_ref()) {
            u.values.iter_mut().zip(&xu.values).for_each(|(v, xv)| *v += a * xv);
        }
    }
}

/// `alpha_I (grad a_I, grad b_I) + alpha_V (a_V, b_V) + alpha_B (a_B, b_B)`.
pub fn inner_u(a: &Control, b: &Control, w: &ControlWeights) -> Result<f64> {
    let mut s = w.alpha_v * a.u_v.l2_inner(&b.u_v)? + w.alpha_b * a.u_b.l2_inner(&b.u_b)?;
    match (&a.u_i, &b.u_i) {
        (Some(ua), Some(ub)) => {
            if ua.mesh.id() != ub.mesh.id() {
                return Err(Error::InvalidArgument("initial controls live on different meshes".into()));
            }
            let k = p1_stiffness(&ua.mesh)?;
            s += w.alpha_i * crate::fem::sparse::dot(&ua.values, &k.mul_vec(&ub.values));
        }
        (None, None) => {}
        _ => return Err(Error::InvalidArgument("only one control carries an initial field".into())),
    }
    Ok(s)
}

/// `(alpha/2)(alpha_I GL(u_I) + alpha_V |u_V|^2 + alpha_B |u_B|^2)` with the
/// double obstacle Ginzburg–Landau energy.
pub fn control_cost(u: &Control, w: &ControlWeights, eps: f64) -> Result<f64> {
    let mut s = w.alpha_v * u.u_v.l2_inner(&u.u_v)? + w.alpha_b * u.u_b.l2_inner(&u.u_b)?;
    if let Some(ui) = &u.u_i {
        if w.alpha_i > 0.0 {
            s += w.alpha_i * double_obstacle_cost(ui, eps)?;
        }
    }
    Ok(0.5 * w.alpha * s)
}

/// Volume force `sum_l u_l f_l` interpolated at the P2 nodes.
pub fn apply_bv(set: &AnsatzSet, coeffs: &[f64], mesh: &Arc<Mesh>) -> VectorField {
    VectorField::from_fn(mesh, |x| {
        let mut v = [0.0; 2];
        for (a, &c) in set.items.iter().zip(coeffs) {
            if c != 0.0 {
                let f = a.eval(x);
                v[0] += c * f[0];
                v[1] += c * f[1];
            }
        }
        v
    })
}

/// Load vectors `(f_l, w)` for every volume ansatz function.
pub fn volume_loads(set: &AnsatzSet, mesh: &Arc<Mesh>) -> Result<Vec<Vec<f64>>> {
    set.items.iter().map(|a| p2_load(mesh, 6, |t, l| a.eval(mesh.map_point(t, l)))).collect()
}

/// Projected boundary values `Pi(g_l)` for every boundary ansatz function.
pub fn boundary_traces(set: &AnsatzSet, proj: &TraceProjector) -> Vec<Vec<f64>> {
    set.items.iter().map(|a| proj.project(|x, side| a.eval_boundary(x, side))).collect()
}

/// Boundary values `Pi(B_B u)` as a combination of projected ansatz traces.
pub fn apply_bb(traces: &[Vec<f64>], coeffs: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (g, &c) in traces.iter().zip(coeffs) {
        if c != 0.0 {
            out.iter_mut().zip(g).for_each(|(o, gv)| *o += c * gv);
        }
    }
    out
}

/// Full P2 vector with the boundary values placed on their dofs.
pub fn boundary_field(proj: &TraceProjector, values: &[f64]) -> VectorField {
    let mut v = VectorField::zeros(proj.mesh());
    for (&d, &x) in proj.dofs().iter().zip(values) {
        v.values[d] = x;
    }
    v
}

/// Projection onto `{|u| <= 1, mean(u) = mean}`: clamp, then shift and
/// reclamp until the mean is restored.
pub fn project_admissible(u: &mut ScalarField, mean: f64) -> Result<()> {
    if !(mean.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("prescribed mean {mean} must lie in (-1, 1)")));
    }
    let area = u.mesh.extent().area();
    let base = u.values.clone();
    let avg = |s: f64, out: &mut Vec<f64>| {
        out.clear();
        out.extend(base.iter().map(|v| (v + s).clamp(-1.0, 1.0)));
        crate::fem::integrate_p1(&u.mesh, out) / area
    };
    let mut buf = Vec::with_capacity(base.len());
    let spread = base.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 2.0;
    let (mut lo, mut hi) = (-spread, spread);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if avg(mid, &mut buf) < mean {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * spread {
            break;
        }
    }
    let m = avg(0.5 * (lo + hi), &mut buf);
    // Remaining defect goes to the unclamped nodes, where the map is linear.
    let free: Vec<f64> = buf.iter().map(|v| if v.abs() < 1.0 { 1.0 } else { 0.0 }).collect();
    let wfree = crate::fem::integrate_p1(&u.mesh, &free) / area;
    if wfree > 0.0 {
        let d = (mean - m) / wfree;
        buf.iter_mut().zip(&free).for_each(|(v, f)| *v = (*v + d * f).clamp(-1.0, 1.0));
    }
    u.values = buf;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::FeSpace;
    use crate::mesh::{build_rect_mesh, Rect};

    #[test]
    fn bump_values() {
        let c = [0.3, 0.4];
        let xi = [0.2, 0.1];
        assert_eq!(bump_eval(c, xi, 1, c), [0.0, 1.0]);
        assert!(bump_eval(c, xi, 0, [0.5, 0.4])[0].abs() < 1e-15);
        let h = bump_eval(c, xi, 0, [0.4, 0.4])[0];
        assert!((h - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_tangential_rejected() {
        let a = Ansatz {
            center: [0.0, 0.5],
            width: [0.1, 0.1],
            component: 0,
            placement: Placement::Boundary(BoundarySide::Left),
        };
        assert!(matches!(AnsatzSet::new(vec![a]), Err(Error::Config(_))));
    }

    #[test]
    fn weights_simplex() {
        assert!(ControlWeights::new(1.0, 0.5, 0.5, 0.0).is_ok());
        assert!(ControlWeights::new(1.0, 0.5, 0.6, 0.0).is_err());
    }

    #[test]
    fn time_series_average_and_inner() {
        let mut u = TimeSeries::zeros(1.0, 4, 1);
        for (k, s) in u.samples.iter_mut().enumerate() {
            s[0] = k as f64;
        }
        assert!((u.average(0.0, 0.5)[0] - 0.5).abs() < 1e-15);
        assert!((u.average(0.125, 0.375)[0] - 0.5).abs() < 1e-15);
        let one = TimeSeries { horizon: 0.5, samples: vec![vec![1.0]; 5] };
        assert!((one.l2_inner(&one).unwrap() - 0.5).abs() < 1e-15);
        let r = u.refine(3);
        assert!((r.average(0.1, 0.9)[0] - u.average(0.1, 0.9)[0]).abs() < 1e-14);
    }

    #[test]
    fn wall_layout() {
        let ext = Rect::new(0.0, 0.0, 1.0, 1.5);
        let left = AnsatzSet::wall_bumps(&ext, BoundarySide::Left, 10);
        assert_eq!(left.len(), 10);
        assert!((left[0].width[1] - 0.15).abs() < 1e-15);
        assert!((left[9].center[1] - 1.425).abs() < 1e-12);
        assert!(AnsatzSet::new(left).is_ok());
    }

    #[test]
    fn bv_superposition() {
        let m = Arc::new(build_rect_mesh(4, 4, Rect::unit()).unwrap());
        let items = vec![
            Ansatz { center: [0.4, 0.5], width: [0.3, 0.3], component: 0, placement: Placement::Volume },
            Ansatz { center: [0.6, 0.5], width: [0.3, 0.3], component: 0, placement: Placement::Volume },
        ];
        let set = AnsatzSet::new(items.clone()).unwrap();
        let f = apply_bv(&set, &[1.0, -1.0], &m);
        let space = FeSpace::p2(&m);
        for i in 0..space.n_scalar() {
            let x = space.dof_point(i);
            let e = items[0].eval(x)[0] - items[1].eval(x)[0];
            assert!((f.values[i] - e).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_restores_box_and_mean() {
        let mesh = Arc::new(build_rect_mesh(8, 8, Rect::unit()).unwrap());
        let mut u = ScalarField::from_fn(&mesh, |x| 3.0 * (x[0] - 0.3) + x[1]);
        project_admissible(&mut u, -0.2).unwrap();
        assert!(u.values.iter().all(|v| v.abs() <= 1.0));
        let m = crate::fem::integrate_p1(&mesh, &u.values);
        assert!((m + 0.2).abs() < 1e-12, "mean {m}");
        let mut w = ScalarField::constant(&mesh, 0.5);
        project_admissible(&mut w, 0.5).unwrap();
        assert!(w.values.iter().all(|v| (v - 0.5).abs() < 1e-14));
    }
}
