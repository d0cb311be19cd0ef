use chns_core::adjoint::{adjoint_sweep, gradient, tracking};
use chns_core::control::{inner_u, AnsatzSet, Control, ControlWeights, Placement, TimeSeries};
use chns_core::fem::{p1_mass, p1_stiffness, ScalarField};
use chns_core::forward::{circle_profile, MeshPlan, Physics, Scenario, SimOptions, Simulator};
use chns_core::material::{FreeEnergy, MaterialLaws};
use chns_core::mesh::{build_rect_mesh, BoundarySide, Mesh, Rect};
use chns_core::optimize::{fd_gradient_check, Objective, ReducedProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

const EPS: f64 = 0.12;

fn extent() -> Rect {
    Rect::new(0.0, 0.0, 1.0, 1.5)
}

fn scenario(steps: usize) -> Scenario {
    let ext = extent();
    let mut bumps = AnsatzSet::wall_bumps(&ext, BoundarySide::Left, 3);
    bumps.extend(AnsatzSet::wall_bumps(&ext, BoundarySide::Right, 3));
    Scenario {
        physics: Physics {
            laws: MaterialLaws::with_default_clamp(1000.0, 100.0, 10.0, 1.0).unwrap(),
            energy: FreeEnergy::relaxed(1e4).unwrap(),
            sigma: 15.5972,
            eps: EPS,
            mobility: EPS / 500.0,
            gravity: [0.0, -0.981],
        },
        horizon: 5e-3 * steps as f64,
        tau: 5e-3,
        v0: Arc::new(|_| [0.0, 0.0]),
        phi0: Arc::new(|x| circle_profile([0.5, 0.75], 0.3, EPS, x)),
        volume: AnsatzSet::new(AnsatzSet::volume_grid(&ext, 2, 2, 0.5)).unwrap(),
        boundary: AnsatzSet::new(bumps).unwrap(),
    }
}

fn mesh() -> Arc<Mesh> {
    Arc::new(build_rect_mesh(8, 12, extent()).unwrap())
}

fn target(mesh: &Arc<Mesh>) -> ScalarField {
    ScalarField::from_fn(mesh, |x| circle_profile([0.5, 0.6], 0.3, EPS, x))
}

fn objective(steps: usize, weights: ControlWeights) -> Objective {
    let sc = scenario(steps);
    let mesh = mesh();
    Objective {
        sim: Simulator::new(sc).unwrap(),
        plan: MeshPlan::Fixed(mesh.clone()),
        target: target(&mesh),
        weights,
        options: SimOptions::new(),
    }
}

fn random_series(rng: &mut ChaCha8Rng, horizon: f64, n: usize, ch: usize, scale: f64) -> TimeSeries {
    let mut s = TimeSeries::zeros(horizon, n, ch);
    for row in &mut s.samples {
        for v in row.iter_mut() {
            *v = scale * rng.random_range(-1.0..1.0);
        }
    }
    s
}

fn random_control(rng: &mut ChaCha8Rng, sc: &Scenario, n: usize, scale: f64) -> Control {
    Control {
        u_i: None,
        u_v: random_series(rng, sc.horizon, n, sc.volume.len(), scale),
        u_b: random_series(rng, sc.horizon, n, sc.boundary.len(), scale),
    }
}

fn only(mut c: Control, keep_v: bool) -> Control {
    if keep_v {
        c.u_b.scale(0.0);
    } else {
        c.u_v.scale(0.0);
    }
    c
}

#[test]
fn adjoint_matches_finite_differences_for_time_controls() {
    let steps = 4;
    let w = ControlWeights::new(1e-2, 0.0, 0.5, 0.5).unwrap();
    let obj = objective(steps, w);
    let sc = obj.sim.scenario.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let u = random_control(&mut rng, &sc, steps, 0.5);
    let mut dirs = Vec::new();
    for k in 0..4 {
        dirs.push(only(random_control(&mut rng, &sc, steps, 1.0), k % 2 == 0));
    }
    let rep = fd_gradient_check(&obj, &u, &dirs, &[1e-2, 1e-3, 1e-4, 1e-5]).unwrap();
    for (k, e) in rep.min_errors().iter().enumerate() {
        assert!(*e <= 1e-4, "direction {k}: relative error {e:.3e}\n{:#?}", rep.rows);
    }
}

#[test]
fn adjoint_matches_finite_differences_for_initial_field() {
    let steps = 3;
    let w = ControlWeights::new(1e-2, 1.0, 0.0, 0.0).unwrap();
    let obj = objective(steps, w);
    let sc = obj.sim.scenario.clone();
    let cm = mesh();
    let mut u = Control::zeros(sc.horizon, steps, sc.volume.len(), sc.boundary.len());
    u.u_i = Some(ScalarField::from_fn(&cm, |x| 0.9 * circle_profile([0.45, 0.8], 0.3, EPS, x)));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut dirs = Vec::new();
    for _ in 0..2 {
        let (a, b, c) = (rng.random_range(-1.0..1.0), rng.random_range(1.0..3.0), rng.random_range(0.0..6.0));
        let mut d = Control::zeros(sc.horizon, steps, sc.volume.len(), sc.boundary.len());
        d.u_i = Some(ScalarField::from_fn(&cm, |x| a * (b * x[0] + c).sin() * (b * x[1]).cos()));
        dirs.push(d);
    }
    let rep = fd_gradient_check(&obj, &u, &dirs, &[1e-2, 1e-3, 1e-4, 1e-5]).unwrap();
    for (k, e) in rep.min_errors().iter().enumerate() {
        assert!(*e <= 1e-4, "direction {k}: relative error {e:.3e}\n{:#?}", rep.rows);
    }
}

#[test]
fn adjoint_is_linear_in_the_tracking_defect() {
    let obj = objective(3, ControlWeights::new(1.0, 0.0, 0.5, 0.5).unwrap());
    let sc = &obj.sim.scenario;
    let u = Control::zeros(sc.horizon, 3, sc.volume.len(), sc.boundary.len());
    let traj = obj.sim.simulate(&u, &obj.plan, obj.options).unwrap();
    let fin = traj.final_state();
    let phi_m = ScalarField::new(fin.mesh.clone(), fin.phi.clone()).unwrap();
    let a1 = adjoint_sweep(&traj, &sc.physics, &obj.target).unwrap();
    let doubled: Vec<f64> = obj.target.values.iter().zip(&phi_m.values).map(|(t, p)| 2.0 * t - p).collect();
    let t2 = ScalarField::new(obj.target.mesh.clone(), doubled).unwrap();
    let a2 = adjoint_sweep(&traj, &sc.physics, &t2).unwrap();
    for (s1, s2) in a1.states.iter().zip(&a2.states) {
        for (x, y) in s1.phi.iter().zip(&s2.phi).chain(s1.v.iter().zip(&s2.v)) {
            assert!((2.0 * x - y).abs() <= 1e-8 * (1.0 + x.abs()));
        }
    }
    let at_target = adjoint_sweep(&traj, &sc.physics, &phi_m).unwrap();
    assert!(tracking(&traj, &phi_m).unwrap() < 1e-28);
    for s in &at_target.states {
        assert!(s.phi.iter().chain(&s.v).chain(&s.mu).all(|x| x.abs() < 1e-12));
    }
}

#[test]
fn gradient_is_the_riesz_representer() {
    let steps = 3;
    let w = ControlWeights::new(1e-2, 0.2, 0.4, 0.4).unwrap();
    let obj = objective(steps, w);
    let sc = obj.sim.scenario.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut u = random_control(&mut rng, &sc, steps, 0.3);
    let cm = mesh();
    u.u_i = Some(ScalarField::from_fn(&cm, |x| circle_profile([0.5, 0.75], 0.3, EPS, x)));
    let (_, traj) = obj.evaluate(&u).unwrap();
    let d = obj.derivative(&u, &traj).unwrap();
    let g = gradient(&d, &u, &w).unwrap();
    let gc = Control { u_i: None, u_v: g.u_v.clone(), u_b: g.u_b.clone() };
    let mut dir = random_control(&mut rng, &sc, steps, 1.0);
    dir.u_i = Some(ScalarField::from_fn(&cm, |x| (3.0 * x[0]).sin() + x[1]));
    let lhs = d.apply(&dir);
    let time_part = Control { u_i: None, ..dir.clone() };
    let mut rhs = inner_u(&gc, &time_part, &w).unwrap();
    let gi = g.u_i.as_ref().unwrap();
    let di = dir.u_i.as_ref().unwrap();
    let h1 = {
        let k = p1_stiffness(&cm).unwrap();
        let m = p1_mass(&cm).unwrap();
        let kd = k.mul_vec(&di.values);
        let md = m.mul_vec(&di.values);
        gi.values.iter().zip(kd.iter().zip(&md)).map(|(a, (x, y))| a * (x + y)).sum::<f64>()
    };
    rhs += h1;
    assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1e-12), "{lhs} vs {rhs}");
    assert!(matches!(sc.boundary.items[0].placement, Placement::Boundary(_)));
}

#[test]
fn adjoint_matches_finite_differences_across_adapted_meshes() {
    use chns_core::adapt::AdaptConfig;
    let steps = 3;
    let w = ControlWeights::new(1e-2, 0.0, 0.5, 0.5).unwrap();
    let mut obj = objective(steps, w);
    let base = Arc::new(build_rect_mesh(4, 6, extent()).unwrap());
    obj.plan = MeshPlan::Adaptive { base, config: AdaptConfig::new(0.5, 0.02, 2e-3).unwrap() };
    let sc = obj.sim.scenario.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u = random_control(&mut rng, &sc, steps, 0.5);
    let (_, traj) = obj.evaluate(&u).unwrap();
    let sizes: Vec<usize> = traj.meshes().iter().map(|m| m.num_triangles()).collect();
    assert!(sizes.windows(2).any(|p| p[0] != p[1]), "meshes never changed: {sizes:?}");
    let dirs = vec![
        only(random_control(&mut rng, &sc, steps, 1.0), true),
        only(random_control(&mut rng, &sc, steps, 1.0), false),
    ];
    let rep = fd_gradient_check(&obj, &u, &dirs, &[1e-3, 1e-4, 1e-5]).unwrap();
    for (k, e) in rep.min_errors().iter().enumerate() {
        assert!(*e <= 1e-4, "direction {k}: relative error {e:.3e}\n{:#?}", rep.rows);
    }
}
