use crate::error::{Error, Result};

/// Symmetric rule on the reference triangle. Points are barycentric and the
/// weights sum to the reference area 1/2.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub order: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integral over a triangle of area `area` of a function of barycentrics.
    pub fn integrate(&self, area: f64, f: impl Fn([f64; 3]) -> f64) -> f64 {
        let s: f64 = self.points.iter().zip(&self.weights).map(|(&l, &w)| w * f(l)).sum();
        2.0 * area * s
    }
}

struct Builder {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl Builder {
    fn new() -> Self {
        Builder { points: Vec::new(), weights: Vec::new() }
    }

    fn centroid(&mut self, w: f64) {
        let c = 1.0 / 3.0;
        self.points.push([c, c, c]);
        self.weights.push(0.5 * w);
    }

    /// Orbit of `(a, a, 1 - 2a)`.
    fn orbit3(&mut self, a: f64, w: f64) {
        let b = 1.0 - 2.0 * a;
        for p in [[b, a, a], [a, b, a], [a, a, b]] {
            self.points.push(p);
            self.weights.push(0.5 * w);
        }
    }

    /// Orbit of `(a, b, 1 - a - b)` with all six permutations.
    fn orbit6(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [b, a, c], [a, c, b], [c, a, b], [b, c, a], [c, b, a]] {
            self.points.push(p);
            self.weights.push(0.5 * w);
        }
    }

    fn finish(self, order: usize) -> QuadratureRule {
        QuadratureRule { order, points: self.points, weights: self.weights }
    }
}

/// Rule exact for polynomials of total degree `order` (1 to 6).
pub fn quadrature(order: usize) -> Result<QuadratureRule> {
    let mut b = Builder::new();
    match order {
        1 => b.centroid(1.0),
        2 => b.orbit3(1.0 / 6.0, 1.0 / 3.0),
        3 | 4 => {
            b.orbit3(0.445_948_490_915_964_886_32, 0.223_381_589_678_011_465_70);
            b.orbit3(0.091_576_213_509_770_743_460, 0.109_951_743_655_321_867_64);
        }
        5 => {
            b.centroid(0.225);
            b.orbit3(0.470_142_064_105_115_089_77, 0.132_394_152_788_506_180_74);
            b.orbit3(0.101_286_507_323_456_338_80, 0.125_939_180_544_827_152_60);
        }
        6 => {
            b.orbit3(0.249_286_745_170_910_421_29, 0.116_786_275_726_379_366_03);
            b.orbit3(0.063_089_014_491_502_228_340, 0.050_844_906_370_206_816_921);
            b.orbit6(0.053_145_049_844_816_947_353, 0.310_352_451_033_784_405_42, 0.082_851_075_618_373_575_194);
        }
        _ => return Err(Error::InvalidArgument(format!("quadrature order must be in 1..=6, got {order}"))),
    }
    Ok(b.finish(order))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Exact integral of l0^a l1^b l2^c over the reference triangle.
    fn monomial_exact(a: u32, b: u32, c: u32) -> f64 {
        factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)
    }

    #[test]
    fn weights_sum_to_half() {
        for order in 1..=6 {
            let q = quadrature(order).unwrap();
            let s: f64 = q.weights.iter().sum();
            assert!((s - 0.5).abs() < 1e-14, "order {order}: {s}");
        }
    }

    #[test]
    fn exact_for_monomials_up_to_order() {
        for order in 1..=6u32 {
            let q = quadrature(order as usize).unwrap();
            for a in 0..=order {
                for b in 0..=(order - a) {
                    let c = order - a - b;
                    let exact = monomial_exact(a, b, c);
                    let approx = q.integrate(0.5, |l| l[0].powi(a as i32) * l[1].powi(b as i32) * l[2].powi(c as i32));
                    assert!(
                        (approx - exact).abs() < 1e-14,
                        "order {order} monomial ({a},{b},{c}): {approx} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn invalid_order() {
        assert!(quadrature(0).is_err());
        assert!(quadrature(7).is_err());
    }
}
