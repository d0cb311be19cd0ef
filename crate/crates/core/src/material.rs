//! Density and viscosity laws and the free-energy densities.

use crate::error::{Error, Result};
use crate::fem::ScalarField;
use crate::mesh::quadrature;

/// Affine density and viscosity in the phase field, constant outside
/// `[phi_a, phi_b]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialLaws {
    pub rho1: f64,
    pub rho2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub phi_a: f64,
    pub phi_b: f64,
}

impl MaterialLaws {
    pub fn new(rho1: f64, rho2: f64, eta1: f64, eta2: f64, phi_a: f64, phi_b: f64) -> Result<Self> {
        if !(rho1 > 0.0 && rho2 > 0.0 && eta1 > 0.0 && eta2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "densities and viscosities must be positive, got rho=({rho1}, {rho2}) eta=({eta1}, {eta2})"
            )));
        }
        if !(phi_a <= -1.0 && phi_b >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "clamp bounds must satisfy phi_a <= -1 <= 1 <= phi_b, got ({phi_a}, {phi_b})"
            )));
        }
        let laws = MaterialLaws { rho1, rho2, eta1, eta2, phi_a, phi_b };
        let (rmin, emin) = (rho1.min(rho2), eta1.min(eta2));
        for phi in [phi_a, phi_b] {
            if laws.density(phi) <= 0.0 || laws.viscosity(phi) <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "clamp bound {phi} gives non-positive density or viscosity (pure-phase minima {rmin}, {emin})"
                )));
            }
        }
        Ok(laws)
    }

    /// Clamp bounds of 1.1 in magnitude, pulled towards 1 until the clamped
    /// density and viscosity stay above half of their pure-phase minima.
    pub fn with_default_clamp(rho1: f64, rho2: f64, eta1: f64, eta2: f64) -> Result<Self> {
        let slack = |a: f64, b: f64| -> (f64, f64) {
            // Law f(phi) = ((b - a) phi + a + b) / 2; excursion beyond +1 moves
            // towards (b - a) sign, beyond -1 the opposite way.
            let half = 0.5 * a.min(b);
            let slope = 0.5 * (b - a);
            let mut up: f64 = 0.1;
            let mut down: f64 = 0.1;
            if slope < 0.0 {
                up = up.min((b - half) / -slope);
            } else if slope > 0.0 {
                down = down.min((a - half) / slope);
            }
            (down, up)
        };
        let (rd, ru) = slack(rho1, rho2);
        let (ed, eu) = slack(eta1, eta2);
        MaterialLaws::new(rho1, rho2, eta1, eta2, -1.0 - rd.min(ed), 1.0 + ru.min(eu))
    }

    #[inline]
    fn clamp(&self, phi: f64) -> f64 {
        phi.clamp(self.phi_a, self.phi_b)
    }

    #[inline]
    pub fn density(&self, phi: f64) -> f64 {
        0.5 * ((self.rho2 - self.rho1) * self.clamp(phi) + self.rho1 + self.rho2)
    }

    #[inline]
    pub fn viscosity(&self, phi: f64) -> f64 {
        0.5 * ((self.eta2 - self.eta1) * self.clamp(phi) + self.eta1 + self.eta2)
    }

    /// `rho_delta = (rho2 - rho1) / 2`
    #[inline]
    pub fn rho_delta(&self) -> f64 {
        0.5 * (self.rho2 - self.rho1)
    }

    /// Derivative of the density: the slope inside the clamp interval, 0 outside.
    #[inline]
    pub fn density_deriv(&self, phi: f64) -> f64 {
        if phi > self.phi_a && phi < self.phi_b {
            self.rho_delta()
        } else {
            0.0
        }
    }

    #[inline]
    pub fn viscosity_deriv(&self, phi: f64) -> f64 {
        if phi > self.phi_a && phi < self.phi_b {
            0.5 * (self.eta2 - self.eta1)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyPart {
    Total,
    /// Convex part, treated implicitly.
    Plus,
    /// Concave part, treated explicitly.
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FreeEnergy {
    /// `(1 - x^2)^2 / 4`
    Polynomial,
    /// Relaxed double obstacle with relaxation `s`.
    RelaxedObstacle { s: f64, xi: f64, delta: f64 },
    /// `(1 - x^2) / 2` on `|x| <= 1`, 0 outside.
    DoubleObstacle,
}

/// `lambda(y) = max(0, y - 1) + min(0, y + 1)`
#[inline]
pub fn lambda(y: f64) -> f64 {
    (y - 1.0).max(0.0) + (y + 1.0).min(0.0)
}

impl FreeEnergy {
    pub fn relaxed(s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("relaxation s must be positive, got {s}")));
        }
        let xi = (1.0 + 2.0 * s + (4.0 * s + 1.0).sqrt()) / (2.0 * s);
        let delta = -(0.5 * (1.0 - xi * xi) + s / 3.0 * lambda(xi).abs().powi(3));
        Ok(FreeEnergy::RelaxedObstacle { s, xi, delta })
    }

    /// Derivative of order `order` (0, 1 or 2) of the requested part at `x`.
    pub fn eval(&self, part: EnergyPart, order: u8, x: f64) -> f64 {
        match part {
            EnergyPart::Total => self.eval(EnergyPart::Plus, order, x) + self.eval(EnergyPart::Minus, order, x),
            EnergyPart::Plus => self.plus(order, x),
            EnergyPart::Minus => self.minus(order, x),
        }
    }

    #[inline]
    pub fn w(&self, x: f64) -> f64 {
        self.eval(EnergyPart::Total, 0, x)
    }

    #[inline]
    pub fn plus(&self, order: u8, x: f64) -> f64 {
        match *self {
            FreeEnergy::Polynomial => match order {
                0 => 0.25 * (x.powi(4) + 1.0),
                1 => x.powi(3),
                2 => 3.0 * x * x,
                _ => panic!("derivative order {order} unsupported"),
            },
            FreeEnergy::RelaxedObstacle { s, xi, .. } => {
                let l = lambda(xi * x);
                match order {
                    0 => s / 3.0 * l.abs().powi(3),
                    1 => s * xi * l.abs() * l,
                    2 => 2.0 * s * xi * xi * l.abs(),
                    _ => panic!("derivative order {order} unsupported"),
                }
            }
            FreeEnergy::DoubleObstacle => {
                // Entire obstacle potential is the concave part; the
                // indicator of [-1, 1] is not represented.
                match order {
                    0..=2 => 0.0,
                    _ => panic!("derivative order {order} unsupported"),
                }
            }
        }
    }

    #[inline]
    pub fn minus(&self, order: u8, x: f64) -> f64 {
        match *self {
            FreeEnergy::Polynomial => match order {
                0 => -0.5 * x * x,
                1 => -x,
                2 => -1.0,
                _ => panic!("derivative order {order} unsupported"),
            },
            FreeEnergy::RelaxedObstacle { xi, delta, .. } => match order {
                0 => 0.5 * (1.0 - xi * xi * x * x) + delta,
                1 => -xi * xi * x,
                2 => -xi * xi,
                _ => panic!("derivative order {order} unsupported"),
            },
            FreeEnergy::DoubleObstacle => {
                let inside = x.abs() <= 1.0;
                match order {
                    0 => {
                        if inside {
                            0.5 * (1.0 - x * x)
                        } else {
                            0.0
                        }
                    }
                    1 => {
                        if inside {
                            -x
                        } else {
                            0.0
                        }
                    }
                    2 => {
                        if inside {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    _ => panic!("derivative order {order} unsupported"),
                }
            }
        }
    }
}

/// Ginzburg–Landau energy with the double obstacle potential:
/// `int (eps/2)|grad u|^2 + W_inf(u) / eps`.
pub fn double_obstacle_cost(u: &ScalarField, eps: f64) -> Result<f64> {
    if let Some((i, v)) = u.values.iter().enumerate().find(|(_, v)| v.abs() > 1.0 + 1e-12) {
        return Err(Error::ConstraintViolation(format!("|u| <= 1 violated at node {i} (value {v})")));
    }
    let mesh = &u.mesh;
    let rule = quadrature(2)?;
    let w = FreeEnergy::DoubleObstacle;
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let g = u.gradient(t);
        let area = mesh.area(t);
        total += 0.5 * eps * (g[0] * g[0] + g[1] * g[1]) * area;
        total += rule.integrate(area, |l| w.w(u.eval_local(t, l))) / eps;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_examples() {
        let m = MaterialLaws::new(1000.0, 100.0, 10.0, 1.0, -1.1, 1.1).unwrap();
        assert_eq!(m.density(-1.0), 1000.0);
        assert_eq!(m.density(0.0), 550.0);
        assert_eq!(m.density(1.1 + 5.0), m.density(1.1));
        assert_eq!(m.viscosity(1.0), 1.0);
    }

    #[test]
    fn default_clamp_keeps_positive() {
        let m = MaterialLaws::with_default_clamp(1000.0, 1.0, 10.0, 0.1).unwrap();
        assert!(m.phi_b > 1.0 && m.phi_b < 1.0011);
        assert!(m.density(10.0) >= 0.5 - 1e-12);
        assert!(m.viscosity(10.0) >= 0.05 - 1e-12);
        let m = MaterialLaws::with_default_clamp(1000.0, 100.0, 10.0, 1.0).unwrap();
        assert!((m.phi_b - 1.1).abs() < 1e-12 && (m.phi_a + 1.1).abs() < 1e-12);
    }

    #[test]
    fn bad_laws_rejected() {
        assert!(MaterialLaws::new(-1.0, 1.0, 1.0, 1.0, -1.0, 1.0).is_err());
        assert!(MaterialLaws::new(1.0, 1.0, 1.0, 1.0, -0.5, 1.0).is_err());
        assert!(MaterialLaws::new(1000.0, 1.0, 1.0, 1.0, -1.0, 3.0).is_err());
    }

    #[test]
    fn relaxed_values() {
        let s = 1e4;
        let w = FreeEnergy::relaxed(s).unwrap();
        let FreeEnergy::RelaxedObstacle { xi, .. } = w else { unreachable!() };
        assert!((xi - (1.0 + 2.0 * s + (4.0 * s + 1.0f64).sqrt()) / (2.0 * s)).abs() < 1e-15);
        assert!(w.w(1.0).abs() < 1e-12);
        assert!(w.w(-1.0).abs() < 1e-12);
        assert!(w.eval(EnergyPart::Total, 1, 1.0).abs() < 1e-9);
        assert!(w.plus(1, 0.9 / xi) == 0.0);
    }

    #[test]
    fn polynomial_values() {
        let w = FreeEnergy::Polynomial;
        assert!((w.w(0.0) - 0.25).abs() < 1e-15);
        assert!(w.w(1.0).abs() < 1e-15);
    }

    #[test]
    fn double_obstacle_cost_constants() {
        use crate::mesh::{build_rect_mesh, Rect};
        use std::sync::Arc;
        let m = Arc::new(build_rect_mesh(4, 4, Rect::unit()).unwrap());
        let one = ScalarField::constant(&m, 1.0);
        assert!(double_obstacle_cost(&one, 0.02).unwrap().abs() < 1e-14);
        let zero = ScalarField::constant(&m, 0.0);
        assert!((double_obstacle_cost(&zero, 0.02).unwrap() - 25.0).abs() < 1e-12);
        let bad = ScalarField::constant(&m, 1.5);
        assert!(matches!(double_obstacle_cost(&bad, 0.02), Err(Error::ConstraintViolation(_))));
    }
}
