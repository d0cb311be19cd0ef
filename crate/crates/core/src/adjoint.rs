//! Backward sweep of the fully discrete adjoint equations and the reduced
//! derivatives and gradients with respect to the three control families.
//!
//! Every step matrix is the transpose of the forward Jacobian at the
//! converged state; couplings to later levels enter through vector-Jacobian
//! products of the lagged coefficient slots.

use crate::control::{Control, ControlWeights, TimeSeries};
use crate::error::{Error, Result};
use crate::fem::sparse::{dot, relative_residual};
use crate::fem::{interpolate, p1_mass, p1_stiffness, CscMatrix, ScalarField, SparseLu};
use crate::forward::{
    residual_jacobian, split_coupled, vjp, Fields, Layout, Physics, Src, SrcGrads, StepCtx, StepKind, Trajectory,
    Transfer,
};

/// Relative residual above which a transposed solve counts as failed.
const SOLVE_TOL: f64 = 1e-8;

/// Multipliers of one step.
#[derive(Clone, Debug)]
pub struct AdjointState {
    pub step: usize,
    /// Momentum multiplier with zero boundary dofs.
    pub v: Vec<f64>,
    /// Multiplier of the boundary rows, aligned with the trace dofs.
    pub boundary: Vec<f64>,
    pub p: Vec<f64>,
    pub lam: f64,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Result of a sweep: multipliers and the derivatives of the tracking term
/// with respect to the step data.
#[derive(Clone, Debug)]
pub struct Adjoint {
    /// `states[m - 1]` for step `m`.
    pub states: Vec<AdjointState>,
    /// Derivative with respect to the nodal values of the initial phase
    /// field on its mesh.
    pub d_phi0: Vec<f64>,
    /// Derivative with respect to the step-averaged volume coefficients.
    pub d_volume: Vec<Vec<f64>>,
    /// Derivative with respect to the step-averaged boundary coefficients.
    pub d_boundary: Vec<Vec<f64>>,
}

/// `1/2 ||phi^M - phi_d||^2` on the final mesh.
pub fn tracking(traj: &Trajectory, phi_d: &ScalarField) -> Result<f64> {
    let (diff, mass) = tracking_residual(traj, phi_d)?;
    Ok(0.5 * dot(&diff, &mass.mul_vec(&diff)))
}

fn tracking_residual(traj: &Trajectory, phi_d: &ScalarField) -> Result<(Vec<f64>, CscMatrix)> {
    let last = traj.final_state();
    let target = interpolate(phi_d, &last.mesh)?;
    let diff = last.phi.iter().zip(&target.values).map(|(a, b)| a - b).collect();
    Ok((diff, traj.discs[traj.steps()].mass.clone()))
}

fn solve_t(jac: &CscMatrix, rhs: &[f64], step: usize) -> Result<Vec<f64>> {
    let fail = |e: Error| Error::SweepFailure { step, source: Box::new(e) };
    let lu = SparseLu::factor(jac).map_err(fail)?;
    let x = lu.solve_transpose(rhs);
    let res = relative_residual(jac, &x, rhs, true);
    if !(res <= SOLVE_TOL) {
        return Err(fail(Error::SolverFailure { residual: res, tol: SOLVE_TOL }));
    }
    Ok(x)
}

fn sub_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x -= y);
}

/// Backward sweep for the tracking functional `1/2 ||phi^M - phi_d||^2`.
pub fn adjoint_sweep(traj: &Trajectory, physics: &Physics, phi_d: &ScalarField) -> Result<Adjoint> {
    let steps = traj.steps();
    if steps == 0 {
        return Err(Error::InvalidArgument("trajectory has no steps".into()));
    }
    let mut gv: Vec<Vec<f64>> = traj.discs.iter().map(|d| vec![0.0; 2 * d.n2]).collect();
    let mut gphi: Vec<Vec<f64>> = traj.discs.iter().map(|d| vec![0.0; d.n1]).collect();
    let mut gmu = gphi.clone();
    let (diff, mass) = tracking_residual(traj, phi_d)?;
    gphi[steps] = mass.mul_vec(&diff);

    let mut states = Vec::with_capacity(steps);
    let mut d_volume = vec![Vec::new(); steps];
    let mut d_boundary = vec![Vec::new(); steps];
    for m in (1..=steps).rev() {
        let disc = &*traj.discs[m];
        let st = &traj.states[m];
        let lag = traj.lagged(m)?;
        let force = disc.volume_force(&traj.volume_coeffs[m - 1]);
        let bvals = disc.boundary_values(&traj.boundary_coeffs[m - 1]);
        let kind = if m == 1 { StepKind::Init } else { StepKind::TwoStep };
        let ctx = StepCtx { disc, phys: physics, tau: traj.tau, kind };
        let (n1, n2) = (disc.n1, disc.n2);
        let mut grads = SrcGrads::new(n1, n2);
        let (lv, lp, ll, lphi, lmu);
        if m >= 2 {
            let off = disc.offsets(Layout::Coupled);
            let mut x = st.v.clone();
            x.extend_from_slice(&st.p);
            x.push(st.lam);
            x.extend_from_slice(&st.phi);
            x.extend_from_slice(&st.mu);
            let f = split_coupled(&x, off, &lag);
            let (_, jac) = residual_jacobian(&ctx, Layout::Coupled, &f, &force, &bvals, None, true)?;
            let mut rhs = gv[m].clone();
            rhs.extend(std::iter::repeat_n(0.0, n1 + 1));
            rhs.extend_from_slice(&gphi[m]);
            rhs.extend_from_slice(&gmu[m]);
            let y = solve_t(&jac.expect("Jacobian requested"), &rhs, m)?;
            let (op, ol, of, om) = (off.p.unwrap(), off.lam.unwrap(), off.phi.unwrap(), off.mu.unwrap());
            (lv, lp, ll, lphi, lmu) =
                (y[..op].to_vec(), y[op..ol].to_vec(), y[ol], y[of..om].to_vec(), y[om..].to_vec());
            vjp(&ctx, &f, Some(&lv), Some(&lphi), Some(&lmu), Src::is_lagged, &mut grads)?;
        } else {
            let f = Fields {
                v: &st.v,
                p: &st.p,
                lam: st.lam,
                phi: &st.phi,
                mu: &st.mu,
                v_prev: &lag.v,
                phi_prev: &lag.phi,
                mu_prev: &[],
                phi_prev2: &[],
            };
            let (_, jm) = residual_jacobian(&ctx, Layout::Momentum, &f, &force, &bvals, None, true)?;
            let mut rhs = gv[m].clone();
            rhs.extend(std::iter::repeat_n(0.0, n1 + 1));
            let y = solve_t(&jm.expect("Jacobian requested"), &rhs, m)?;
            let op = 2 * n2;
            (lv, lp, ll) = (y[..op].to_vec(), y[op..op + n1].to_vec(), y[op + n1]);
            let mut cur = SrcGrads::new(n1, n2);
            vjp(&ctx, &f, Some(&lv), None, None, |s| matches!(s, Src::PhiCur | Src::MuCur), &mut cur)?;
            let mut rhs = gphi[m].clone();
            sub_assign(&mut rhs, cur.get(Src::PhiCur));
            rhs.extend(gmu[m].iter().zip(cur.get(Src::MuCur)).map(|(a, b)| a - b));
            let (_, jc) = residual_jacobian(&ctx, Layout::CahnHilliard, &f, &force, &bvals, None, true)?;
            let y = solve_t(&jc.expect("Jacobian requested"), &rhs, m)?;
            (lphi, lmu) = (y[..n1].to_vec(), y[n1..].to_vec());
            vjp(&ctx, &f, Some(&lv), Some(&lphi), Some(&lmu), Src::is_lagged, &mut grads)?;
        }

        let dofs = disc.proj.dofs();
        d_volume[m - 1] = disc
            .volume_loads
            .iter()
            .map(|fl| lv.iter().zip(fl).zip(&disc.is_boundary).filter(|(_, &b)| !b).map(|((a, b), _)| a * b).sum())
            .collect();
        d_boundary[m - 1] =
            disc.boundary_traces.iter().map(|gl| dofs.iter().zip(gl).map(|(&d, g)| lv[d] * g).sum()).collect();

        let prev = &traj.states[m - 1];
        let t1 = Transfer::new(&prev.mesh, &st.mesh)?;
        sub_assign(&mut gv[m - 1], &t1.vector_t(grads.get(Src::VPrev)));
        sub_assign(&mut gphi[m - 1], &t1.scalar_t(grads.get(Src::PhiPrev)));
        if m >= 2 {
            sub_assign(&mut gmu[m - 1], &t1.scalar_t(grads.get(Src::MuPrev)));
            let t2 = Transfer::new(&traj.states[m - 2].mesh, &st.mesh)?;
            sub_assign(&mut gphi[m - 2], &t2.scalar_t(grads.get(Src::PhiPrev2)));
        }

        let boundary = dofs.iter().map(|&d| lv[d]).collect();
        let v = lv.iter().zip(&disc.is_boundary).map(|(&x, &b)| if b { 0.0 } else { x }).collect();
        states.push(AdjointState { step: m, v, boundary, p: lp, lam: ll, phi: lphi, mu: lmu });
    }
    states.reverse();
    Ok(Adjoint { states, d_phi0: std::mem::take(&mut gphi[0]), d_volume, d_boundary })
}

/// Derivative of the reduced functional as a linear form on the control
/// coefficients: per time sample for the time-dependent parts, per node of
/// the control mesh for the initial field.
#[derive(Clone, Debug)]
pub struct ControlDerivative {
    pub u_i: Option<Vec<f64>>,
    pub u_v: TimeSeries,
    pub u_b: TimeSeries,
}

impl ControlDerivative {
    /// `DJ(u) delta`
    pub fn apply(&self, delta: &Control) -> f64 {
        let pair =
            |a: &TimeSeries, b: &TimeSeries| -> f64 { a.samples.iter().zip(&b.samples).map(|(x, y)| dot(x, y)).sum() };
        let mut s = pair(&self.u_v, &delta.u_v) + pair(&self.u_b, &delta.u_b);
        if let (Some(d), Some(u)) = (&self.u_i, &delta.u_i) {
            s += dot(d, &u.values);
        }
        s
    }
}

/// Reduced gradients, shaped like the control.
#[derive(Clone, Debug)]
pub struct GradientU {
    /// `H^1` Riesz representative on the control mesh.
    pub u_i: Option<ScalarField>,
    /// Riesz representatives with respect to the weighted `L^2(0,T)` products.
    pub u_v: TimeSeries,
    pub u_b: TimeSeries,
}

fn to_samples(per_step: &[Vec<f64>], tau: f64, like: &TimeSeries) -> TimeSeries {
    let mut out = TimeSeries::zeros(like.horizon, like.n_samples(), like.channels());
    for (m, d) in per_step.iter().enumerate() {
        let (t0, t1) = (m as f64 * tau, (m + 1) as f64 * tau);
        for (k, w) in like.overlaps(t0, t1) {
            for (o, x) in out.samples[k].iter_mut().zip(d) {
                *o += w / tau * x;
            }
        }
    }
    out
}

/// Full derivative of `J = tracking + control cost`.
pub fn derivative(
    traj: &Trajectory,
    adj: &Adjoint,
    u: &Control,
    weights: &ControlWeights,
    eps: f64,
) -> Result<ControlDerivative> {
    let mut dv = to_samples(&adj.d_volume, traj.tau, &u.u_v);
    let mut db = to_samples(&adj.d_boundary, traj.tau, &u.u_b);
    let a = weights.alpha;
    dv.axpy(a * weights.alpha_v * u.u_v.dt(), &u.u_v);
    db.axpy(a * weights.alpha_b * u.u_b.dt(), &u.u_b);
    let u_i = match &u.u_i {
        None => None,
        Some(ui) => {
            let t = Transfer::new(&ui.mesh, &traj.states[0].mesh)?;
            let mut d = t.scalar_t(&adj.d_phi0);
            if weights.alpha_i > 0.0 {
                let k = p1_stiffness(&ui.mesh)?.mul_vec(&ui.values);
                let mm = p1_mass(&ui.mesh)?.mul_vec(&ui.values);
                let c = 0.5 * a * weights.alpha_i;
                for i in 0..d.len() {
                    // W_inf'(u) = -u inside the box.
                    d[i] += c * (eps * k[i] - mm[i] / eps);
                }
            }
            Some(d)
        }
    };
    Ok(ControlDerivative { u_i, u_v: dv, u_b: db })
}

/// Riesz representative of the volume-force derivative.
pub fn gradient_uv(d: &ControlDerivative, weights: &ControlWeights) -> TimeSeries {
    riesz_time(&d.u_v, weights.alpha_v)
}

/// Riesz representative of the boundary-control derivative.
pub fn gradient_ub(d: &ControlDerivative, weights: &ControlWeights) -> TimeSeries {
    riesz_time(&d.u_b, weights.alpha_b)
}

fn riesz_time(d: &TimeSeries, w: f64) -> TimeSeries {
    let mut g = d.clone();
    if w > 0.0 {
        g.scale(1.0 / (w * d.dt()));
    } else {
        g.scale(0.0);
    }
    g
}

/// `H^1` Riesz representative `g` with `(grad g, grad w) + (g, w) = DJ(u) w`.
pub fn gradient_ui(d: &ControlDerivative, u_i: &ScalarField) -> Result<Option<ScalarField>> {
    let Some(di) = &d.u_i else { return Ok(None) };
    let mesh = &u_i.mesh;
    let k = p1_stiffness(mesh)?;
    let m = p1_mass(mesh)?;
    let a = add_matrices(&k, &m);
    let g = SparseLu::factor(&a)?.solve(di);
    Ok(Some(ScalarField { mesh: mesh.clone(), values: g }))
}

fn add_matrices(a: &CscMatrix, b: &CscMatrix) -> CscMatrix {
    let mut t = Vec::new();
    for m in [a, b] {
        let p = m.pattern();
        for c in 0..p.ncols() {
            for k in p.col_ptr()[c]..p.col_ptr()[c + 1] {
                t.push((p.row_idx()[k], c, m.values()[k]));
            }
        }
    }
    CscMatrix::from_triplets(a.nrows(), a.ncols(), &t)
}

/// All gradients at once.
pub fn gradient(d: &ControlDerivative, u: &Control, weights: &ControlWeights) -> Result<GradientU> {
    let u_i = match &u.u_i {
        Some(ui) => gradient_ui(d, ui)?,
        None => None,
    };
    Ok(GradientU { u_i, u_v: gradient_uv(d, weights), u_b: gradient_ub(d, weights) })
}
