use chns_core::fem::model::{poisson_study, stokes_study, stokes_th};
use chns_core::mesh::{build_rect_mesh, Rect};
use std::sync::Arc;

const LEVELS: [usize; 4] = [4, 8, 16, 32];

fn ratios(e: &[f64]) -> Vec<f64> {
    e.windows(2).map(|w| w[0] / w[1]).collect()
}

#[test]
fn poisson_l2_error_drops_fourfold() {
    let e = poisson_study(&LEVELS).unwrap();
    let r = ratios(&e);
    assert!(r.iter().all(|q| (3.5..=4.5).contains(q)), "errors {e:?} ratios {r:?}");
}

#[test]
fn stokes_pressure_error_drops_fourfold() {
    let e = stokes_study(&LEVELS).unwrap();
    let p: Vec<f64> = e.iter().map(|s| s.pressure_l2).collect();
    let v: Vec<f64> = e.iter().map(|s| s.velocity_l2).collect();
    let (rp, rv) = (ratios(&p), ratios(&v));
    assert!(rp.iter().all(|q| (3.5..=4.5).contains(q)), "pressure {p:?} ratios {rp:?}");
    // Quadratic velocities gain one more order.
    assert!(rv.iter().all(|q| *q > 6.5), "velocity {v:?} ratios {rv:?}");
    assert!(e.iter().all(|s| s.divergence <= 1e-10));
}

#[test]
fn lid_driven_cavity_solves_to_tolerance() {
    let mesh = Arc::new(build_rect_mesh(16, 16, Rect::unit()).unwrap());
    let lid = |x: [f64; 2]| if x[1] > 1.0 - 1e-12 { [1.0, 0.0] } else { [0.0, 0.0] };
    let s = stokes_th(&mesh, 1.0, |_| [0.0, 0.0], lid).unwrap();
    assert!(s.residual <= 1e-9, "residual {}", s.residual);
    assert!(s.divergence <= 1e-10, "divergence {}", s.divergence);
}
