//! The four pipelines behind the CLI subcommands.

use crate::error::{AppError, AppResult, StageExt};
use crate::output::{write_control_norms, write_file, write_scalar_vtk, write_series, write_state_vtk, RunManifest};
use crate::preset::{Circle, ScenarioPreset};
use chns_core::adapt::{adapt_step_mesh, jump_indicator, AdaptConfig};
use chns_core::control::{Control, TimeSeries};
use chns_core::fem::{FeSpace, ScalarField};
use chns_core::forward::{divergence_defect, FieldState, MeshPlan, SimOptions, Simulator, Trajectory};
use chns_core::mesh::{Mesh, PointLocator};
use chns_core::optimize::{
    fd_gradient_check, projected_gradient_ui, steepest_descent, FdReport, Objective, OptimizationLog, ProjectedConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Optimize,
    GradCheck,
    AdaptDemo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Optimize => "optimize",
            Command::GradCheck => "gradcheck",
            Command::AdaptDemo => "adapt-demo",
        }
    }
}

/// Where a run writes its files; `None` keeps everything in memory.
#[derive(Clone, Debug, Default)]
pub struct OutputDir(pub Option<PathBuf>);

impl OutputDir {
    fn file(
        &self,
        manifest: &mut RunManifest,
        name: &str,
        f: impl FnOnce(&mut dyn std::io::Write) -> std::io::Result<()>,
    ) -> AppResult<()> {
        let Some(dir) = &self.0 else { return Ok(()) };
        let path = dir.join(name);
        write_file(&path, |w| f(w))?;
        manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn finish(&self, manifest: &RunManifest) -> AppResult<()> {
        if let Some(dir) = &self.0 {
            manifest.write(dir)?;
        }
        Ok(())
    }

    pub fn create(dir: Option<&Path>) -> AppResult<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).map_err(AppError::io(d))?;
        }
        Ok(OutputDir(dir.map(Path::to_path_buf)))
    }
}

/// Per-step record of a forward run.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub mass: f64,
    pub divergence: f64,
    pub cfl: f64,
    pub newton_iterations: usize,
    pub triangles: usize,
}

pub struct SimulateReport {
    pub trajectory: Trajectory,
    pub records: Vec<StepRecord>,
}

impl SimulateReport {
    pub fn energy_monotone(&self, rel_tol: f64) -> bool {
        let e0 = self.records.first().map_or(0.0, |r| r.energy.abs());
        self.records.windows(2).all(|w| w[1].energy <= w[0].energy + rel_tol * e0)
    }

    pub fn max_newton_iterations(&self) -> usize {
        self.trajectory.newton.iter().flatten().map(|r| r.iterations).max().unwrap_or(0)
    }
}

fn records(traj: &Trajectory, sim: &Simulator) -> AppResult<Vec<StepRecord>> {
    let energies = traj.energies(&sim.scenario.physics).stage("energy")?;
    let mut out = Vec::with_capacity(traj.states.len());
    for (m, s) in traj.states.iter().enumerate() {
        out.push(StepRecord {
            step: m,
            time: s.time,
            energy: energies[m],
            mass: s.mass(),
            divergence: divergence_defect(&traj.discs[m], &s.v).stage("divergence")?,
            cfl: if m == 0 { 0.0 } else { traj.cfl[m - 1] },
            newton_iterations: if m == 0 { 0 } else { traj.newton[m - 1].iter().map(|r| r.iterations).sum() },
            triangles: s.mesh.num_triangles(),
        });
    }
    Ok(out)
}

fn write_records(w: &mut dyn std::io::Write, rec: &[StepRecord]) -> std::io::Result<()> {
    writeln!(w, "step,time,energy,mass,divergence,cfl,newton_iterations,triangles")?;
    for r in rec {
        writeln!(
            w,
            "{},{:.12e},{:.15e},{:.15e},{:.3e},{:.6e},{},{}",
            r.step, r.time, r.energy, r.mass, r.divergence, r.cfl, r.newton_iterations, r.triangles
        )?;
    }
    Ok(())
}

fn write_states(
    out: &OutputDir,
    manifest: &mut RunManifest,
    traj: &Trajectory,
    every: usize,
    prefix: &str,
) -> AppResult<()> {
    let last = traj.states.len() - 1;
    for (m, s) in traj.states.iter().enumerate() {
        if m % every == 0 || m == last {
            out.file(manifest, &format!("{prefix}_{m:05}.vtk"), |w| write_state_vtk(w, s))?;
        }
    }
    Ok(())
}

/// Forward run under the preset's initial control.
pub fn simulate(p: &ScenarioPreset, out: &OutputDir) -> AppResult<SimulateReport> {
    let mut man = RunManifest::new(Command::Simulate.name(), p);
    let sim = Simulator::new(p.scenario()?).stage("setup")?;
    let plan = p.mesh_plan()?;
    let u = p.initial_control(&p.base_mesh()?)?;
    let traj = man.time("forward", || sim.simulate(&u, &plan, SimOptions::new())).stage("forward")?;
    let rec = records(&traj, &sim)?;
    out.file(&mut man, "steps.csv", |w| write_records(w, &rec))?;
    write_states(out, &mut man, &traj, p.vtk_every, "state")?;
    out.finish(&man)?;
    Ok(SimulateReport { trajectory: traj, records: rec })
}

pub struct OptimizeReport {
    pub control: Control,
    pub log: OptimizationLog,
    /// Final forward run.
    pub trajectory: Trajectory,
    pub initial_tracking: f64,
    pub final_tracking: f64,
    /// Every iterate satisfied the initial-field constraints.
    pub iterates_admissible: bool,
}

fn objective(p: &ScenarioPreset, plan: MeshPlan) -> AppResult<Objective> {
    let sim = Simulator::new(p.scenario()?).stage("setup")?;
    let target_mesh = match &plan {
        MeshPlan::Fixed(m) => m.clone(),
        _ => fine_target_mesh(p)?,
    };
    Ok(Objective { target: p.target_field(&target_mesh), sim, plan, weights: p.weights()?, options: SimOptions::new() })
}

/// The desired state on adaptive runs lives on the base mesh refined to the
/// interface resolution around the target circle.
fn fine_target_mesh(p: &ScenarioPreset) -> AppResult<Arc<Mesh>> {
    let base = p.base_mesh()?;
    let f = p.target_field(&base);
    let state = phase_state(&base, &f);
    Ok(adapt_step_mesh(&state, &base, &p.adapt_config()?).stage("target mesh")?.0)
}

pub fn phase_state(mesh: &Arc<Mesh>, phi: &ScalarField) -> FieldState {
    let ndof = FeSpace::p2(mesh).ndof();
    FieldState {
        mesh: mesh.clone(),
        v: vec![0.0; ndof],
        p: vec![0.0; mesh.num_vertices()],
        lam: 0.0,
        phi: phi.values.clone(),
        mu: vec![0.0; mesh.num_vertices()],
        time: 0.0,
    }
}

/// Steepest descent on `u_V, u_B`, or the projected gradient method on `u_I`
/// when the preset controls the initial field.
pub fn optimize(p: &ScenarioPreset, out: &OutputDir) -> AppResult<OptimizeReport> {
    let mut man = RunManifest::new(Command::Optimize.name(), p);
    let obj = objective(p, p.mesh_plan()?)?;
    let base = p.base_mesh()?;
    let u0 = p.initial_control(&base)?;
    let cfg = p.optimizer();
    let (u, log) = if let Some(mean) = p.ui_init {
        let adapt = if p.fixed_mesh { None } else { Some((base.clone(), p.adapt_config()?)) };
        let pc = ProjectedConfig { base: cfg, mean, adapt };
        man.time("projected gradient", || projected_gradient_ui(&obj, &u0, &pc)).stage("optimize")?
    } else {
        man.time("steepest descent", || steepest_descent(&obj, &u0, &cfg)).stage("optimize")?
    };
    let iterates_admissible = match p.ui_init {
        Some(mean) => u.check_admissible(mean).is_ok(),
        None => true,
    };
    let (e, traj) = man.time("final forward", || obj.reduced_j(&u)).stage("final forward")?;
    let initial_tracking = log.rows.first().map_or(e.tracking_norm, |r| r.tracking_norm);
    out.file(&mut man, "log.csv", |w| log.write_csv(w))?;
    out.file(&mut man, "control_norms.csv", |w| write_control_norms(w, &u))?;
    if u.u_v.channels() > 0 {
        out.file(&mut man, "u_v.csv", |w| write_series(w, &u.u_v))?;
    }
    if u.u_b.channels() > 0 {
        out.file(&mut man, "u_b.csv", |w| write_series(w, &u.u_b))?;
    }
    if let Some(ui) = &u.u_i {
        out.file(&mut man, "u_i.vtk", |w| write_scalar_vtk(w, "u_i", ui))?;
    }
    write_states(out, &mut man, &traj, p.vtk_every, "optimal")?;
    out.finish(&man)?;
    Ok(OptimizeReport {
        control: u,
        log,
        trajectory: traj,
        initial_tracking,
        final_tracking: e.tracking_norm,
        iterates_admissible,
    })
}

/// Gradient check results with the family each direction perturbs.
pub struct GradCheckReport {
    pub report: FdReport,
    /// `"u_v"` or `"u_b"` per direction.
    pub families: Vec<&'static str>,
    pub steps: usize,
}

impl GradCheckReport {
    pub fn worst_min_error(&self) -> f64 {
        self.report.min_errors().into_iter().fold(0.0, f64::max)
    }
}

fn random_series(rng: &mut ChaCha8Rng, like: &TimeSeries, scale: f64) -> TimeSeries {
    let mut s = TimeSeries::zeros(like.horizon, like.n_samples(), like.channels());
    for row in &mut s.samples {
        for v in row.iter_mut() {
            *v = scale * rng.random_range(-1.0..1.0);
        }
    }
    s
}

/// Central-difference check of the adjoint derivative on a fixed mesh over
/// `gradcheck_steps` steps, along random `u_V` and `u_B` directions.
pub fn gradcheck(p: &ScenarioPreset, out: &OutputDir) -> AppResult<GradCheckReport> {
    let mut man = RunManifest::new(Command::GradCheck.name(), p);
    let mut q = p.clone();
    q.horizon = p.tau * p.gradcheck_steps as f64;
    q.control_samples = None;
    q.fixed_mesh = true;
    let obj = objective(&q, q.mesh_plan()?)?;
    let base = q.base_mesh()?;
    let zero = q.initial_control(&base)?;
    let mut rng = ChaCha8Rng::seed_from_u64(q.seed);
    let mut u = zero.clone();
    u.u_v = random_series(&mut rng, &zero.u_v, 0.5);
    u.u_b = random_series(&mut rng, &zero.u_b, 0.5);
    let mut dirs = Vec::new();
    let mut families = Vec::new();
    for (family, nch) in [("u_v", zero.u_v.channels()), ("u_b", zero.u_b.channels())] {
        if nch == 0 {
            continue;
        }
        for _ in 0..q.gradcheck_directions {
            let mut d = zero.clone();
            if family == "u_v" {
                d.u_v = random_series(&mut rng, &zero.u_v, 1.0);
            } else {
                d.u_b = random_series(&mut rng, &zero.u_b, 1.0);
            }
            dirs.push(d);
            families.push(family);
        }
    }
    let report =
        man.time("gradient check", || fd_gradient_check(&obj, &u, &dirs, &q.gradcheck_h)).stage("gradcheck")?;
    out.file(&mut man, "gradcheck.csv", |w| report.write_csv(w))?;
    out.finish(&man)?;
    Ok(GradCheckReport { report, families, steps: q.gradcheck_steps })
}

/// Adapted mesh around a circular interface.
pub struct AdaptReport {
    pub mesh: Arc<Mesh>,
    pub phase: ScalarField,
    pub config: AdaptConfig,
    /// Fewest triangles met along a radial segment through the band.
    pub cells_across: usize,
    /// Band width over the largest leg length of a triangle in the band.
    pub band_resolution: f64,
}

/// Triangles hit by radial segments across the band `|d - r| <= pi eps / 2`,
/// minimized over `rays` directions.
pub fn cells_across_band(mesh: &Mesh, c: &Circle, eps: f64, rays: usize) -> usize {
    let loc = PointLocator::new(mesh);
    let half = std::f64::consts::FRAC_PI_2 * eps;
    let samples = 2000;
    (0..rays)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / rays as f64;
            let mut hit = HashSet::new();
            for i in 0..=samples {
                let d = c.radius - half + 2.0 * half * i as f64 / samples as f64;
                let x = [c.center[0] + d * a.cos(), c.center[1] + d * a.sin()];
                if let Some((t, _)) = loc.locate(mesh, x) {
                    hit.insert(t);
                }
            }
            hit.len()
        })
        .min()
        .unwrap_or(0)
}

/// `pi eps / h_max` with `h_max` the largest leg of a triangle meeting the band.
pub fn band_resolution(mesh: &Mesh, c: &Circle, eps: f64) -> f64 {
    let half = std::f64::consts::FRAC_PI_2 * eps;
    let mut h_max: f64 = 0.0;
    for t in 0..mesh.num_triangles() {
        let pts = mesh.triangle_points(t);
        let d: Vec<f64> = pts.iter().map(|x| (x[0] - c.center[0]).hypot(x[1] - c.center[1]) - c.radius).collect();
        let (lo, hi) =
            (d.iter().cloned().fold(f64::INFINITY, f64::min), d.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        if hi >= -half && lo <= half {
            h_max = h_max.max((2.0 * mesh.area(t)).sqrt());
        }
    }
    2.0 * half / h_max
}

/// Adapts the base mesh to the preset's initial interface and reports its
/// resolution.
pub fn adapt_demo(p: &ScenarioPreset, out: &OutputDir) -> AppResult<AdaptReport> {
    let mut man = RunManifest::new(Command::AdaptDemo.name(), p);
    let base = p.base_mesh()?;
    let config = p.adapt_config()?;
    let circle = if p.ui_init.is_some() { p.target } else { p.phi0 };
    let profile = crate::preset::make_phase_profile(&circle, p.eps, &base);
    let state = phase_state(&base, &profile);
    let (mesh, _) = man.time("adapt", || adapt_step_mesh(&state, &base, &config)).stage("adapt")?;
    let phase = crate::preset::make_phase_profile(&circle, p.eps, &mesh);
    let eta = jump_indicator(&phase_state(&mesh, &phase));
    out.file(&mut man, "adapted.vtk", |w| write_scalar_vtk(w, "phi", &phase))?;
    out.file(&mut man, "indicator.csv", |w| {
        writeln!(w, "triangle,area,eta")?;
        for (t, e) in eta.values.iter().enumerate() {
            writeln!(w, "{t},{:.6e},{e:.6e}", mesh.area(t))?;
        }
        Ok(())
    })?;
    out.finish(&man)?;
    Ok(AdaptReport {
        cells_across: cells_across_band(&mesh, &circle, p.eps, 16),
        band_resolution: band_resolution(&mesh, &circle, p.eps),
        mesh,
        phase,
        config,
    })
}
