use chns_app::preset::{Circle, StopKind};
use chns_app::{make_phase_profile, parse_str, PresetName, ScenarioPreset};
use chns_core::fem::integrate_p1;
use chns_core::mesh::{build_rect_mesh, Rect};
use std::f64::consts::PI;
use std::sync::Arc;

#[test]
fn rising_bubble_constants() {
    let p = ScenarioPreset::rising_bubble();
    assert_eq!((p.rho1, p.rho2, p.eta1, p.eta2), (1000.0, 100.0, 10.0, 1.0));
    assert_eq!(p.sigma, 15.5972);
    assert_eq!(p.gravity, [0.0, -0.981]);
    assert_eq!((p.width, p.height, p.horizon, p.tau), (1.0, 1.5, 1.0, 5e-3));
    assert_eq!(p.eps, 0.04);
    assert_eq!(p.relaxation, 1e4);
    assert!((p.mobility() - 0.04 / 500.0).abs() < 1e-18);
    assert_eq!((p.theta, p.v_max), (0.5, 3e-4));
    assert!((p.v_min() - 0.5 * (PI * 0.04 / 8.0).powi(2)).abs() < 1e-18);
    assert_eq!(p.phi0.center, [0.5, 0.75]);
    assert_eq!(p.phi0.radius, 0.25);
    assert_eq!(p.target.center, [0.5, 0.5]);
    assert_eq!(p.side_bumps, 10);
    assert_eq!((p.alpha, p.alpha_b), (1e-10, 1.0));
    assert_eq!((p.stop, p.stop_tol), (StopKind::GradientFactor, 0.1));
    assert!(!p.desk && p.deltas.is_empty());
    assert!(p.violations().is_empty());
}

#[test]
fn reconstruction_constants() {
    let p = ScenarioPreset::initial_reconstruction();
    assert_eq!((p.rho1, p.rho2, p.eta1, p.eta2), (1000.0, 1.0, 10.0, 0.1));
    assert_eq!(p.sigma, 1.245);
    assert_eq!(p.gravity, [0.0, -0.981]);
    assert_eq!((p.width, p.height, p.horizon), (1.0, 1.0, 1.5));
    assert_eq!((p.eps, p.alpha), (0.02, 0.2));
    assert_eq!((p.alpha_i, p.alpha_v, p.alpha_b), (1.0, 0.0, 0.0));
    assert_eq!(p.ui_init, Some(-0.8));
    assert_eq!(p.target.center, [0.5, 0.6]);
    assert_eq!(p.target.radius, 0.1763040551);
    assert_eq!((p.stop, p.stop_tol), (StopKind::Directional, 1e-3));
    assert_eq!(p.side_bumps + p.bottom_top_bumps + p.volume_nx * p.volume_ny, 0);
    assert!(p.violations().is_empty());
}

#[test]
fn desk_variants_record_their_deltas() {
    for name in [PresetName::RisingBubble, PresetName::InitialReconstruction] {
        let p = ScenarioPreset::desk(name);
        assert!(p.desk);
        assert!(p.deltas.contains(&"eps".to_string()));
        let loaded = parse_str(&format!("preset = {name}\nscale = desk\n"), &[]).unwrap();
        assert_eq!(loaded.deltas.iter().collect::<std::collections::BTreeSet<_>>(), p.deltas.iter().collect());
        assert!(p.violations().is_empty(), "{:?}", p.violations());
    }
}

#[test]
fn phase_profile_ramps_from_the_circle() {
    let mesh = Arc::new(build_rect_mesh(4, 4, Rect::unit()).unwrap());
    let (eps, r) = (0.05, 0.2);
    let c = Circle { center: [0.0, 0.0], radius: r, inside: -1.0 };
    let f = make_phase_profile(&c, eps, &mesh);
    for (x, v) in mesh.vertices().iter().zip(&f.values) {
        let d = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let expect = if d - r >= PI * eps / 2.0 {
            1.0
        } else if d - r <= -PI * eps / 2.0 {
            -1.0
        } else {
            ((d - r) / eps).sin()
        };
        assert!((v - expect).abs() < 1e-14);
    }
    let probe = |d: f64| {
        let m = Arc::new(build_rect_mesh(1, 1, Rect::new(d, 0.0, d + 1.0, 1.0)).unwrap());
        make_phase_profile(&c, eps, &m).values[0]
    };
    assert!(probe(r).abs() < 1e-15);
    assert!((probe(r + PI * eps / 2.0) - 1.0).abs() < 1e-15);
    assert_eq!(probe(0.9), 1.0);
}

#[test]
fn reconstruction_target_mean_matches_the_initial_value() {
    let p = ScenarioPreset::initial_reconstruction();
    let mesh = Arc::new(build_rect_mesh(160, 160, p.extent()).unwrap());
    let f = p.target_field(&mesh);
    assert!(f.values.iter().all(|v| v.abs() <= 1.0));
    // Inside the circle the phase value is +1.
    let center = mesh.vertices().iter().position(|x| (x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.6).abs() < 1e-9);
    assert_eq!(f.values[center.expect("grid vertex at the center")], 1.0);
    let mean = integrate_p1(&mesh, &f.values);
    assert!((mean - p.ui_init.unwrap()).abs() < 1e-2, "mean {mean}");
}
