//! Fully discrete time stepping: the sequential first step, the coupled
//! two-step scheme, trajectory recording and CFL-triggered step halving.

mod assembly;
mod disc;
mod newton;
mod step;

pub(crate) use assembly::{residual_jacobian, vjp, Fields, Src, SrcGrads, StepCtx};
pub use assembly::{Physics, StepKind};
pub use disc::{Discretization, Layout, Offsets};
pub use newton::{newton_solve, NewtonReport};
pub(crate) use step::split_coupled;
pub use step::{init_step, two_step, Lagged, StepInput, StepSolution, NEWTON_MAX_ITER, NEWTON_TOL};

use crate::adapt::{adapt_step_mesh, AdaptConfig};
use crate::control::{AnsatzSet, Control};
use crate::error::{Error, Result};
use crate::fem::basis::{p1_at, p1_grad, p2_vec_at, ElementQuad};
use crate::fem::{
    integrate_p1, interpolate, p1_interpolation_matrix, p2_interpolation_matrix, CscMatrix, FeSpace, ScalarField,
    VectorField,
};
use crate::mesh::{quadrature, Mesh};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

pub type VelocityFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;
pub type PhaseFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Circular sine-ramp profile: `sin((|x - c| - r)/eps)` inside the band
/// `||x - c| - r| <= pi eps / 2`, `+-1` outside.
pub fn circle_profile(center: [f64; 2], r: f64, eps: f64, x: [f64; 2]) -> f64 {
    let d = ((x[0] - center[0]).hypot(x[1] - center[1]) - r) / eps;
    if d.abs() <= std::f64::consts::FRAC_PI_2 {
        d.sin()
    } else {
        d.signum()
    }
}

/// Problem data of a forward run.
#[derive(Clone)]
pub struct Scenario {
    pub physics: Physics,
    pub horizon: f64,
    /// Initial step size.
    pub tau: f64,
    pub v0: VelocityFn,
    /// Initial phase field when no initial control is given.
    pub phi0: PhaseFn,
    pub volume: AnsatzSet,
    pub boundary: AnsatzSet,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("physics", &self.physics)
            .field("horizon", &self.horizon)
            .field("tau", &self.tau)
            .field("volume", &self.volume.len())
            .field("boundary", &self.boundary.len())
            .finish()
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let p = &self.physics;
        if !(p.sigma > 0.0 && p.eps > 0.0 && p.mobility > 0.0) {
            return Err(Error::Config(format!(
                "sigma, eps and mobility must be positive, got {}, {}, {}",
                p.sigma, p.eps, p.mobility
            )));
        }
        if !(self.horizon > 0.0 && self.tau > 0.0) {
            return Err(Error::Config(format!("horizon {} and tau {} must be positive", self.horizon, self.tau)));
        }
        let m = self.horizon / self.tau;
        if (m - m.round()).abs() > 1e-9 * m.max(1.0) {
            return Err(Error::Config(format!("horizon {} is not a multiple of tau {}", self.horizon, self.tau)));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.tau).round() as usize
    }
}

/// One time level.
#[derive(Clone, Debug)]
pub struct FieldState {
    pub mesh: Arc<Mesh>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub lam: f64,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub time: f64,
}

impl FieldState {
    pub fn velocity(&self) -> VectorField {
        VectorField { mesh: self.mesh.clone(), values: self.v.clone() }
    }

    pub fn pressure(&self) -> ScalarField {
        ScalarField { mesh: self.mesh.clone(), values: self.p.clone() }
    }

    pub fn phase(&self) -> ScalarField {
        ScalarField { mesh: self.mesh.clone(), values: self.phi.clone() }
    }

    pub fn potential(&self) -> ScalarField {
        ScalarField { mesh: self.mesh.clone(), values: self.mu.clone() }
    }

    /// `(phi, 1)`
    pub fn mass(&self) -> f64 {
        integrate_p1(&self.mesh, &self.phi)
    }

    /// All fields interpolated to `target`.
    pub fn transfer(&self, target: &Arc<Mesh>) -> Result<FieldState> {
        if target.id() == self.mesh.id() {
            return Ok(self.clone());
        }
        let t = Transfer::new(&self.mesh, target)?;
        Ok(FieldState {
            mesh: target.clone(),
            v: t.vector(&self.v),
            p: t.scalar(&self.p),
            lam: self.lam,
            phi: t.scalar(&self.phi),
            mu: t.scalar(&self.mu),
            time: self.time,
        })
    }
}

/// Interpolation between two meshes (identity when they coincide).
pub struct Transfer {
    p1: Option<CscMatrix>,
    p2: Option<CscMatrix>,
}

impl Transfer {
    pub fn new(from: &Arc<Mesh>, to: &Arc<Mesh>) -> Result<Self> {
        if from.id() == to.id() {
            return Ok(Transfer { p1: None, p2: None });
        }
        Ok(Transfer { p1: Some(p1_interpolation_matrix(from, to)?), p2: Some(p2_interpolation_matrix(from, to)?) })
    }

    pub fn is_identity(&self) -> bool {
        self.p1.is_none()
    }

    pub fn scalar(&self, x: &[f64]) -> Vec<f64> {
        self.p1.as_ref().map_or_else(|| x.to_vec(), |m| m.mul_vec(x))
    }

    pub fn scalar_t(&self, x: &[f64]) -> Vec<f64> {
        self.p1.as_ref().map_or_else(|| x.to_vec(), |m| m.mul_transpose_vec(x))
    }

    pub fn vector(&self, x: &[f64]) -> Vec<f64> {
        match &self.p2 {
            None => x.to_vec(),
            Some(m) => {
                let ns = m.ncols();
                let mut out = m.mul_vec(&x[..ns]);
                out.extend(m.mul_vec(&x[ns..]));
                out
            }
        }
    }

    pub fn vector_t(&self, x: &[f64]) -> Vec<f64> {
        match &self.p2 {
            None => x.to_vec(),
            Some(m) => {
                let nr = m.nrows();
                let mut out = m.mul_transpose_vec(&x[..nr]);
                out.extend(m.mul_transpose_vec(&x[nr..]));
                out
            }
        }
    }
}

/// How the mesh of each time level is chosen.
#[derive(Clone, Debug)]
pub enum MeshPlan {
    Fixed(Arc<Mesh>),
    /// Per-level meshes of an earlier run, `meshes[m]` for state `m`.
    Replay(Vec<Arc<Mesh>>),
    /// Each step's mesh is rebuilt from `base` by adapting to the previous state.
    Adaptive {
        base: Arc<Mesh>,
        config: AdaptConfig,
    },
}

/// A full forward run.
#[derive(Clone)]
pub struct Trajectory {
    /// `states[m]` for `m = 0..=M`.
    pub states: Vec<FieldState>,
    /// Discretization of each state; state 0 shares the mesh of state 1.
    pub discs: Vec<Arc<Discretization>>,
    pub tau: f64,
    pub halvings: usize,
    /// Step-averaged control coefficients, index `m - 1`.
    pub volume_coeffs: Vec<Vec<f64>>,
    pub boundary_coeffs: Vec<Vec<f64>>,
    /// Newton reports per step; the first step has two (CH, momentum).
    pub newton: Vec<Vec<NewtonReport>>,
    /// CFL number checked before each step.
    pub cfl: Vec<f64>,
    /// Mesh of the initial control, when one was applied.
    pub control_mesh: Option<Arc<Mesh>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn final_state(&self) -> &FieldState {
        self.states.last().expect("trajectory has an initial state")
    }

    pub fn meshes(&self) -> Vec<Arc<Mesh>> {
        self.discs.iter().map(|d| d.mesh.clone()).collect()
    }

    /// Lagged fields of step `m >= 1` on that step's mesh.
    pub fn lagged(&self, m: usize) -> Result<Lagged> {
        lagged(&self.states, m, &self.discs[m].mesh)
    }

    /// Discrete energy of every level.
    pub fn energies(&self, physics: &Physics) -> Result<Vec<f64>> {
        (0..self.states.len())
            .map(|m| {
                let s = &self.states[m];
                let rho_phi = if m == 0 {
                    s.phi.clone()
                } else {
                    Transfer::new(&self.states[m - 1].mesh, &s.mesh)?.scalar(&self.states[m - 1].phi)
                };
                energy(&self.discs[m], physics, &s.v, &s.phi, &rho_phi)
            })
            .collect()
    }
}

fn lagged(states: &[FieldState], m: usize, mesh: &Arc<Mesh>) -> Result<Lagged> {
    let prev = &states[m - 1];
    let t = Transfer::new(&prev.mesh, mesh)?;
    let phi2 = if m >= 2 {
        let pp = &states[m - 2];
        Transfer::new(&pp.mesh, mesh)?.scalar(&pp.phi)
    } else {
        Vec::new()
    };
    Ok(Lagged { v: t.vector(&prev.v), p: t.scalar(&prev.p), phi: t.scalar(&prev.phi), mu: t.scalar(&prev.mu), phi2 })
}

/// `int 1/2 rho(phi_rho)|v|^2 + sigma eps/2 |grad phi|^2 + sigma/eps W(phi)`.
pub fn energy(disc: &Discretization, physics: &Physics, v: &[f64], phi: &[f64], phi_rho: &[f64]) -> Result<f64> {
    let mesh = &disc.mesh;
    let p2 = FeSpace::p2(mesh);
    let rule = quadrature(5)?;
    let mut eq = ElementQuad::new(&rule);
    let mut e = 0.0;
    for t in 0..mesh.num_triangles() {
        eq.reinit(mesh, t, &rule);
        let tri = mesh.triangles()[t];
        let (d2, _) = p2.local_dofs(t);
        let g = p1_grad(phi, &tri, &eq.dl);
        for q in 0..eq.len() {
            let l = eq.l[q];
            let vv = p2_vec_at(v, disc.n2, &d2, &eq.n2[q]);
            let rho = physics.laws.density(p1_at(phi_rho, &tri, l));
            let x = p1_at(phi, &tri, l);
            e += eq.jw[q]
                * (0.5 * rho * (vv[0] * vv[0] + vv[1] * vv[1])
                    + 0.5 * physics.sigma * physics.eps * (g[0] * g[0] + g[1] * g[1])
                    + physics.sigma / physics.eps * physics.energy.w(x));
        }
    }
    Ok(e)
}

/// `max_T max_{vertices} |v| tau / diam(T)`
pub fn cfl_number(mesh: &Mesh, v: &[f64], tau: f64) -> f64 {
    let n2 = v.len() / 2;
    let mut c: f64 = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let vmax = tri.iter().map(|&i| v[i].hypot(v[n2 + i])).fold(0.0, f64::max);
        c = c.max(vmax * tau / mesh.diameter(t));
    }
    c
}

/// Largest `|(div v, q_i)|` over the pressure basis.
pub fn divergence_defect(disc: &Discretization, v: &[f64]) -> Result<f64> {
    let d = crate::fem::assemble_form(&crate::fem::Form::Divergence, &disc.mesh)?;
    Ok(d.mul_vec(v).iter().fold(0.0, |m, x| m.max(x.abs())))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SimOptions {
    /// Linearize `W'_+` about each step's initial guess.
    pub frozen: bool,
    /// Maximal number of step-size halvings.
    pub max_halvings: usize,
}

impl SimOptions {
    pub fn new() -> Self {
        SimOptions { frozen: false, max_halvings: 6 }
    }
}

/// Scenario plus a per-mesh discretization cache.
pub struct Simulator {
    pub scenario: Scenario,
    cache: Mutex<HashMap<u64, Arc<Discretization>>>,
}

enum Abort {
    Restart(Error),
    Fail(Error),
}

impl Simulator {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        Ok(Simulator { scenario, cache: Mutex::new(HashMap::new()) })
    }

    pub fn disc(&self, mesh: &Arc<Mesh>) -> Result<Arc<Discretization>> {
        let mut cache = self.cache.lock().expect("cache lock");
        if let Some(d) = cache.get(&mesh.id()) {
            return Ok(d.clone());
        }
        if cache.len() > 256 {
            cache.clear();
        }
        let d = Arc::new(Discretization::new(mesh, &self.scenario.volume, &self.scenario.boundary)?);
        cache.insert(mesh.id(), d.clone());
        Ok(d)
    }

    fn initial_state(&self, u: &Control, mesh: &Arc<Mesh>) -> Result<FieldState> {
        let phi = match &u.u_i {
            Some(ui) => interpolate(ui, mesh)?.values,
            None => ScalarField::from_fn(mesh, |x| (self.scenario.phi0)(x)).values,
        };
        let n1 = mesh.num_vertices();
        Ok(FieldState {
            mesh: mesh.clone(),
            v: VectorField::from_fn(mesh, |x| (self.scenario.v0)(x)).values,
            p: vec![0.0; n1],
            lam: 0.0,
            phi,
            mu: vec![0.0; n1],
            time: 0.0,
        })
    }

    fn mesh_for(&self, plan: &MeshPlan, m: usize, prev: Option<&FieldState>) -> Result<Arc<Mesh>> {
        match plan {
            MeshPlan::Fixed(mesh) => Ok(mesh.clone()),
            MeshPlan::Replay(meshes) => meshes.get(m).cloned().ok_or_else(|| {
                Error::InvalidArgument(format!("replayed plan has {} meshes, level {m} requested", meshes.len()))
            }),
            MeshPlan::Adaptive { base, config } => {
                let state = prev.expect("adaptive plan needs the previous state");
                Ok(adapt_step_mesh(state, base, config)?.0)
            }
        }
    }

    /// Runs the scenario under control `u`; on a CFL violation or a failed
    /// Newton solve the whole run restarts with half the step size.
    pub fn simulate(&self, u: &Control, plan: &MeshPlan, opts: SimOptions) -> Result<Trajectory> {
        let mut tau = self.scenario.tau;
        let mut halvings = 0;
        let mut newton_restarts = 0;
        loop {
            match self.run(u, plan, opts, tau, halvings) {
                Ok(t) => return Ok(t),
                Err(Abort::Restart(e)) => {
                    let newton = matches!(&e, Error::StepFailure { source, .. } if matches!(**source, Error::NewtonNonConvergence { .. }));
                    if halvings >= opts.max_halvings || (newton && newton_restarts >= 1) {
                        return Err(e);
                    }
                    if matches!(plan, MeshPlan::Replay(_)) {
                        return Err(e);
                    }
                    newton_restarts += newton as usize;
                    halvings += 1;
                    tau *= 0.5;
                }
                Err(Abort::Fail(e)) => return Err(e),
            }
        }
    }

    fn run(
        &self,
        u: &Control,
        plan: &MeshPlan,
        opts: SimOptions,
        tau: f64,
        halvings: usize,
    ) -> Result<Trajectory, Abort> {
        let sc = &self.scenario;
        let steps = (sc.horizon / tau).round() as usize;
        let fail = Abort::Fail;
        let mesh0 = match plan {
            MeshPlan::Adaptive { base, .. } => {
                let coarse = self.initial_state(u, base).map_err(fail)?;
                self.mesh_for(plan, 0, Some(&coarse)).map_err(fail)?
            }
            _ => self.mesh_for(plan, 0, None).map_err(fail)?,
        };
        if let MeshPlan::Replay(ms) = plan {
            if ms.len() != steps + 1 {
                return Err(fail(Error::InvalidArgument(format!(
                    "replayed plan has {} meshes but the run needs {}",
                    ms.len(),
                    steps + 1
                ))));
            }
        }
        let s0 = self.initial_state(u, &mesh0).map_err(fail)?;
        let d0 = self.disc(&mesh0).map_err(fail)?;
        let mut traj = Trajectory {
            states: vec![s0],
            discs: vec![d0],
            tau,
            halvings,
            volume_coeffs: Vec::with_capacity(steps),
            boundary_coeffs: Vec::with_capacity(steps),
            newton: Vec::with_capacity(steps),
            cfl: Vec::with_capacity(steps),
            control_mesh: u.u_i.as_ref().map(|f| f.mesh.clone()),
        };
        for m in 1..=steps {
            let prev = &traj.states[m - 1];
            let cfl = cfl_number(&prev.mesh, &prev.v, tau);
            if cfl > 1.0 {
                return Err(Abort::Restart(Error::ConstraintViolation(format!(
                    "CFL number {cfl:.3} exceeds 1 before step {m} at tau {tau}"
                ))));
            }
            let mesh = if m == 1 { mesh0.clone() } else { self.mesh_for(plan, m, Some(prev)).map_err(fail)? };
            let disc = self.disc(&mesh).map_err(fail)?;
            let (t0, t1) = ((m - 1) as f64 * tau, m as f64 * tau);
            let cv = u.u_v.average(t0, t1);
            let cb = u.u_b.average(t0, t1);
            let force = disc.volume_force(&cv);
            let bvals = disc.boundary_values(&cb);
            let lag = lagged(&traj.states, m, &mesh).map_err(fail)?;
            let inp =
                StepInput { disc: &disc, physics: &sc.physics, tau, force: &force, bvals: &bvals, frozen: opts.frozen };
            let solved = if m == 1 {
                init_step(&inp, &lag).map(|(s, r)| (s, r.to_vec()))
            } else {
                two_step(&inp, &lag).map(|(s, r)| (s, vec![r]))
            };
            let (sol, reports) = match solved {
                Ok(x) => x,
                Err(e @ Error::NewtonNonConvergence { .. }) => return Err(Abort::Restart(e.at_step(m))),
                Err(e) => return Err(fail(e.at_step(m))),
            };
            traj.states.push(FieldState {
                mesh: mesh.clone(),
                v: sol.v,
                p: sol.p,
                lam: sol.lam,
                phi: sol.phi,
                mu: sol.mu,
                time: t1,
            });
            if m == 1 {
                traj.discs[0] = disc.clone();
            }
            traj.discs.push(disc);
            traj.volume_coeffs.push(cv);
            traj.boundary_coeffs.push(cb);
            traj.newton.push(reports);
            traj.cfl.push(cfl);
        }
        Ok(traj)
    }
}

/// One-shot forward run.
pub fn simulate(u: &Control, scenario: &Scenario, plan: &MeshPlan) -> Result<Trajectory> {
    Simulator::new(scenario.clone())?.simulate(u, plan, SimOptions::new())
}
