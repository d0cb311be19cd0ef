//! Reduced objective, steepest descent for the time-dependent controls,
//! projected gradient for the initial phase field, and the finite-difference
//! gradient check.

use crate::adapt::{adapt_control_mesh, AdaptConfig};
use crate::adjoint::{adjoint_sweep, derivative, gradient, tracking, ControlDerivative, GradientU};
use crate::control::{control_cost, inner_u, project_admissible, Control, ControlWeights};
use crate::error::{Error, Result};
use crate::fem::sparse::dot;
use crate::fem::{interpolate, p1_mass, p1_stiffness, ScalarField};
use crate::forward::{MeshPlan, SimOptions, Simulator, Trajectory};
use crate::mesh::Mesh;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

/// Value of the reduced functional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eval {
    pub j: f64,
    /// `||phi^M - phi_d||`
    pub tracking_norm: f64,
    pub halvings: usize,
}

/// A reduced problem `u -> J(u)` with derivative.
pub trait ReducedProblem {
    /// Data kept from an evaluation for the derivative.
    type State;

    fn evaluate(&self, u: &Control) -> Result<(Eval, Self::State)>;

    fn derivative(&self, u: &Control, state: &Self::State) -> Result<ControlDerivative>;

    fn weights(&self) -> &ControlWeights;
}

/// Tracking-type optimal control problem on top of a simulator.
pub struct Objective {
    pub sim: Simulator,
    pub plan: MeshPlan,
    pub target: ScalarField,
    pub weights: ControlWeights,
    pub options: SimOptions,
}

impl Objective {
    /// `1/2 ||phi^M - phi_d||^2 + control cost`, with the trajectory.
    pub fn reduced_j(&self, u: &Control) -> Result<(Eval, Trajectory)> {
        let traj = self.sim.simulate(u, &self.plan, self.options)?;
        let t = tracking(&traj, &self.target)?;
        let c = control_cost(u, &self.weights, self.sim.scenario.physics.eps)?;
        let eval = Eval { j: t + c, tracking_norm: (2.0 * t).sqrt(), halvings: traj.halvings };
        Ok((eval, traj))
    }
}

impl ReducedProblem for Objective {
    type State = Trajectory;

    fn evaluate(&self, u: &Control) -> Result<(Eval, Trajectory)> {
        self.reduced_j(u)
    }

    fn derivative(&self, u: &Control, traj: &Trajectory) -> Result<ControlDerivative> {
        let adj = adjoint_sweep(traj, &self.sim.scenario.physics, &self.target)?;
        derivative(traj, &adj, u, &self.weights, self.sim.scenario.physics.eps)
    }

    fn weights(&self) -> &ControlWeights {
        &self.weights
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Stop once `||grad J||_U` has dropped by this factor.
    GradientFactor(f64),
    /// Stop once `|DJ(u) d|` along the normalized search direction is below this.
    DirectionalDerivative(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    /// Armijo slope fraction.
    pub armijo_c: f64,
    /// Backtracking factor.
    pub backtrack: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
    pub stop: StopRule,
    /// Stop when the best `J` improves by less than `stagnation_tol`
    /// (relative) over `stagnation_window` iterations.
    pub stagnation_window: usize,
    pub stagnation_tol: f64,
    /// Start each line search at twice the last accepted step.
    pub adaptive_step: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iter: 100,
            armijo_c: 1e-4,
            backtrack: 0.5,
            initial_step: 1.0,
            max_backtracks: 30,
            stop: StopRule::GradientFactor(0.1),
            stagnation_window: 5,
            stagnation_tol: 1e-8,
            adaptive_step: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::Config(format!("Armijo fraction must lie in (0, 1), got {}", self.armijo_c)));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config(format!("backtracking factor must lie in (0, 1), got {}", self.backtrack)));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::Config(format!("initial step must be positive, got {}", self.initial_step)));
        }
        Ok(())
    }
}

/// One optimizer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterLog {
    pub iter: usize,
    pub j: f64,
    pub tracking_norm: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub backtracks: usize,
    pub accepted: bool,
    pub halvings: usize,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    Stagnation,
    LineSearchFailed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationLog {
    pub rows: Vec<IterLog>,
    pub stop: Option<StopReason>,
}

impl OptimizationLog {
    /// Wall-clock times are left out so identical runs give identical files.
    pub const CSV_HEADER: &'static str = "iteration,J,tracking_norm,grad_norm,step,backtracks,accepted,halvings";

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.12e},{:.12e},{:.12e},{:.6e},{},{},{}",
                r.iter, r.j, r.tracking_norm, r.grad_norm, r.step, r.backtracks, r.accepted as u8, r.halvings
            )?;
        }
        Ok(())
    }

    /// `J` of the accepted iterates, starting with the initial point.
    pub fn accepted_j(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.accepted).map(|r| r.j).collect()
    }
}

fn stagnated(best: &[f64], cfg: &OptimizerConfig) -> bool {
    let w = cfg.stagnation_window;
    if w == 0 || best.len() <= w {
        return false;
    }
    let old = best[best.len() - 1 - w];
    let new = best[best.len() - 1];
    old - new < cfg.stagnation_tol * old.abs().max(f64::MIN_POSITIVE)
}

/// Refines the sample grids of `u` to at least `steps` samples when the
/// trajectory used a finer step than the control grid.
fn refine_to_steps(u: &mut Control, steps: usize) {
    for ts in [&mut u.u_v, &mut u.u_b] {
        let n = ts.n_samples();
        if n > 0 && steps > n && steps.is_multiple_of(n) {
            *ts = ts.refine(steps / n);
        }
    }
}

fn time_only(g: &GradientU) -> Control {
    Control { u_i: None, u_v: g.u_v.clone(), u_b: g.u_b.clone() }
}

/// Steepest descent with Armijo backtracking on the time-dependent controls.
pub fn steepest_descent<P: ReducedProblem>(
    problem: &P,
    u0: &Control,
    cfg: &OptimizerConfig,
) -> Result<(Control, OptimizationLog)>
where
    P::State: StepCount,
{
    cfg.validate()?;
    let w = *problem.weights();
    if !(w.alpha_v > 0.0 || w.alpha_b > 0.0) {
        return Err(Error::Config("steepest descent needs alpha_V + alpha_B > 0".into()));
    }
    let start = Instant::now();
    let mut u = u0.clone();
    let (mut cur, mut state) = problem.evaluate(&u)?;
    refine_to_steps(&mut u, state.steps());
    let mut log = OptimizationLog { rows: Vec::new(), stop: None };
    let mut best = vec![cur.j];
    let mut step = cfg.initial_step;
    let mut g0 = None;
    for iter in 0..=cfg.max_iter {
        let d = problem.derivative(&u, &state)?;
        let g = time_only(&gradient(&d, &Control { u_i: None, ..u.clone() }, &w)?);
        let gn2 = inner_u(&g, &g, &w)?;
        let gn = gn2.max(0.0).sqrt();
        let g0n = *g0.get_or_insert(gn);
        log.rows.push(IterLog {
            iter,
            j: cur.j,
            tracking_norm: cur.tracking_norm,
            grad_norm: gn,
            step: 0.0,
            backtracks: 0,
            accepted: true,
            halvings: cur.halvings,
            seconds: start.elapsed().as_secs_f64(),
        });
        let done = match cfg.stop {
            StopRule::GradientFactor(f) => gn <= f * g0n,
            StopRule::DirectionalDerivative(t) => gn <= t,
        };
        if gn == 0.0 || (iter > 0 && done) {
            log.stop = Some(StopReason::Converged);
            return Ok((u, log));
        }
        if iter == cfg.max_iter {
            log.stop = Some(StopReason::MaxIterations);
            return Ok((u, log));
        }
        if stagnated(&best, cfg) {
            log.stop = Some(StopReason::Stagnation);
            return Ok((u, log));
        }
        let mut s = step;
        let mut accepted = None;
        for bt in 0..=cfg.max_backtracks {
            let mut trial = u.clone();
            trial.axpy(-s, &g);
            match problem.evaluate(&trial) {
                Ok((e, st)) if e.j <= cur.j - cfg.armijo_c * s * gn2 => {
                    accepted = Some((trial, e, st, bt));
                    break;
                }
                Ok(_) | Err(Error::StepFailure { .. }) | Err(Error::ConstraintViolation(_)) => s *= cfg.backtrack,
                Err(e) => return Err(e),
            }
        }
        let Some((trial, e, st, bt)) = accepted else {
            log.stop = Some(StopReason::LineSearchFailed);
            return Ok((u, log));
        };
        let row = log.rows.last_mut().expect("row pushed above");
        row.step = s;
        row.backtracks = bt;
        u = trial;
        refine_to_steps(&mut u, st.steps());
        cur = e;
        state = st;
        best.push(cur.j.min(*best.last().expect("nonempty")));
        step = if cfg.adaptive_step { 2.0 * s } else { cfg.initial_step };
    }
    unreachable!("loop returns on its last iteration")
}

/// Number of steps of an evaluation state, used to refine control grids.
pub trait StepCount {
    fn steps(&self) -> usize;
}

impl StepCount for Trajectory {
    fn steps(&self) -> usize {
        Trajectory::steps(self)
    }
}

impl StepCount for () {
    fn steps(&self) -> usize {
        0
    }
}

/// `H^1` inner product matrix applied to `x`.
fn h1_apply(mesh: &Arc<Mesh>, x: &[f64]) -> Result<Vec<f64>> {
    let mut y = p1_stiffness(mesh)?.mul_vec(x);
    let m = p1_mass(mesh)?.mul_vec(x);
    y.iter_mut().zip(&m).for_each(|(a, b)| *a += b);
    Ok(y)
}

/// Settings of the projected-gradient iteration for the initial field.
#[derive(Clone, Debug)]
pub struct ProjectedConfig {
    pub base: OptimizerConfig,
    /// Prescribed mean of `u_I`.
    pub mean: f64,
    /// Re-adapt the control mesh from this base after every iteration.
    pub adapt: Option<(Arc<Mesh>, AdaptConfig)>,
}

/// Projected `H^1` gradient method with Armijo search along the projection arc.
pub fn projected_gradient_ui<P: ReducedProblem>(
    problem: &P,
    u0: &Control,
    cfg: &ProjectedConfig,
) -> Result<(Control, OptimizationLog)> {
    let oc = &cfg.base;
    oc.validate()?;
    let w = *problem.weights();
    let Some(ui0) = &u0.u_i else {
        return Err(Error::Config("projected gradient needs an initial-field control".into()));
    };
    let start = Instant::now();
    let mut u = u0.clone();
    let mut ui = ui0.clone();
    project_admissible(&mut ui, cfg.mean)?;
    u.u_i = Some(ui);
    u.check_admissible(cfg.mean)?;
    let (mut cur, mut state) = problem.evaluate(&u)?;
    let mut log = OptimizationLog { rows: Vec::new(), stop: None };
    let mut best = vec![cur.j];
    let mut step = oc.initial_step;
    for iter in 0..=oc.max_iter {
        let d = problem.derivative(&u, &state)?;
        let g = gradient(&d, &u, &w)?.u_i.expect("initial-field control present");
        let ui = u.u_i.as_ref().expect("initial-field control present");
        let di = d.u_i.as_ref().expect("initial-field control present");
        let gn = dot(&g.values, di).max(0.0).sqrt();
        // Unit-step projected direction for the stopping test.
        let mut probe = ScalarField { mesh: ui.mesh.clone(), values: sub(&ui.values, &g.values, 1.0) };
        project_admissible(&mut probe, cfg.mean)?;
        let dir: Vec<f64> = probe.values.iter().zip(&ui.values).map(|(a, b)| a - b).collect();
        let dnorm = dot(&dir, &h1_apply(&ui.mesh, &dir)?).sqrt();
        let dd = if dnorm > 0.0 { dot(di, &dir) / dnorm } else { 0.0 };
        log.rows.push(IterLog {
            iter,
            j: cur.j,
            tracking_norm: cur.tracking_norm,
            grad_norm: gn,
            step: 0.0,
            backtracks: 0,
            accepted: true,
            halvings: cur.halvings,
            seconds: start.elapsed().as_secs_f64(),
        });
        let done = match oc.stop {
            StopRule::DirectionalDerivative(t) => dd.abs() < t,
            StopRule::GradientFactor(f) => gn <= f * log.rows[0].grad_norm && iter > 0,
        };
        if dnorm == 0.0 || done {
            log.stop = Some(StopReason::Converged);
            return Ok((u, log));
        }
        if iter == oc.max_iter {
            log.stop = Some(StopReason::MaxIterations);
            return Ok((u, log));
        }
        if stagnated(&best, oc) {
            log.stop = Some(StopReason::Stagnation);
            return Ok((u, log));
        }
        let mut s = step;
        let mut accepted = None;
        for bt in 0..=oc.max_backtracks {
            let mut cand = ScalarField { mesh: ui.mesh.clone(), values: sub(&ui.values, &g.values, s) };
            project_admissible(&mut cand, cfg.mean)?;
            let delta: Vec<f64> = cand.values.iter().zip(&ui.values).map(|(a, b)| a - b).collect();
            let slope = dot(di, &delta);
            let trial = Control { u_i: Some(cand), ..u.clone() };
            match problem.evaluate(&trial) {
                Ok((e, st)) if slope < 0.0 && e.j <= cur.j + oc.armijo_c * slope => {
                    accepted = Some((trial, e, st, bt));
                    break;
                }
                Ok(_) | Err(Error::StepFailure { .. }) => s *= oc.backtrack,
                Err(e) => return Err(e),
            }
        }
        let Some((mut trial, mut e, mut st, bt)) = accepted else {
            log.stop = Some(StopReason::LineSearchFailed);
            return Ok((u, log));
        };
        let row = log.rows.last_mut().expect("row pushed above");
        row.step = s;
        row.backtracks = bt;
        if let Some((base, acfg)) = &cfg.adapt {
            let field = trial.u_i.as_ref().expect("initial-field control present");
            let (mesh, moved) = adapt_control_mesh(field, base, acfg, cfg.mean)?;
            if mesh.id() != field.mesh.id() {
                trial.u_i = Some(moved);
                (e, st) = problem.evaluate(&trial)?;
            }
        }
        trial.check_admissible(cfg.mean)?;
        u = trial;
        cur = e;
        state = st;
        best.push(cur.j.min(*best.last().expect("nonempty")));
        step = if oc.adaptive_step { 2.0 * s } else { oc.initial_step };
    }
    unreachable!("loop returns on its last iteration")
}

fn sub(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - s * y).collect()
}

/// One line of a finite-difference check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdRow {
    pub direction: usize,
    pub h: f64,
    pub adjoint: f64,
    pub fd: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub rows: Vec<FdRow>,
}

impl FdReport {
    /// Smallest relative error over `h`, per direction.
    pub fn min_errors(&self) -> Vec<f64> {
        let n = self.rows.iter().map(|r| r.direction + 1).max().unwrap_or(0);
        let mut out = vec![f64::INFINITY; n];
        for r in &self.rows {
            out[r.direction] = out[r.direction].min(r.rel_err);
        }
        out
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "direction,h,adjoint,fd,rel_err")?;
        for r in &self.rows {
            writeln!(w, "{},{:.1e},{:.15e},{:.15e},{:.6e}", r.direction, r.h, r.adjoint, r.fd, r.rel_err)?;
        }
        Ok(())
    }
}

/// Compares `DJ(u) delta` with central differences `(J(u+h delta) - J(u-h delta)) / 2h`.
pub fn fd_gradient_check<P: ReducedProblem>(
    problem: &P,
    u: &Control,
    directions: &[Control],
    hs: &[f64],
) -> Result<FdReport> {
    let (_, state) = problem.evaluate(u)?;
    let d = problem.derivative(u, &state)?;
    let mut rows = Vec::new();
    for (k, dir) in directions.iter().enumerate() {
        let adjoint = d.apply(dir);
        for &h in hs {
            let mut up = u.clone();
            up.axpy(h, dir);
            let mut um = u.clone();
            um.axpy(-h, dir);
            let jp = problem.evaluate(&up)?.0.j;
            let jm = problem.evaluate(&um)?.0.j;
            let fd = (jp - jm) / (2.0 * h);
            let rel_err = (adjoint - fd).abs() / adjoint.abs().max(1e-14);
            rows.push(FdRow { direction: k, h, adjoint, fd, rel_err });
        }
    }
    Ok(FdReport { rows })
}

/// Initial-field control on `mesh`, interpolated from `field` and projected.
pub fn initial_control(field: &ScalarField, mesh: &Arc<Mesh>, mean: f64) -> Result<ScalarField> {
    let mut f = interpolate(field, mesh)?;
    project_admissible(&mut f, mean)?;
    Ok(f)
}
