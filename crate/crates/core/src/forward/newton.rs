use crate::error::{Error, Result};
use crate::fem::sparse::norm2;
use crate::fem::{CscMatrix, SparseLu};

/// Residual norms of a Newton solve; `residuals[k]` is the norm after `k`
/// updates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

/// Newton's method on an oracle returning the residual and, when asked, the
/// Jacobian at `x`. Converged when the Euclidean residual norm is at most
/// `tol`.
pub fn newton_solve<F>(mut oracle: F, x0: Vec<f64>, tol: f64, max_iter: usize) -> Result<(Vec<f64>, NewtonReport)>
where
    F: FnMut(&[f64], bool) -> Result<(Vec<f64>, Option<CscMatrix>)>,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("Newton tolerance must be positive, got {tol}")));
    }
    let mut x = x0;
    let mut report = NewtonReport::default();
    loop {
        let (r, jac) = oracle(&x, report.iterations < max_iter)?;
        let rn = norm2(&r);
        report.residuals.push(rn);
        if !rn.is_finite() {
            return Err(Error::NewtonNonConvergence {
                iterations: report.iterations,
                residual: rn,
                history: report.residuals,
            });
        }
        if rn <= tol {
            return Ok((x, report));
        }
        if report.iterations >= max_iter {
            return Err(Error::NewtonNonConvergence {
                iterations: report.iterations,
                residual: rn,
                history: report.residuals,
            });
        }
        let jac = jac.ok_or_else(|| Error::Internal("oracle returned no Jacobian".into()))?;
        let lu = SparseLu::factor(&jac)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = lu.solve(&neg);
        x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        report.iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_converges_in_one_step() {
        let a = CscMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 4.0), (0, 1, 1.0)]);
        let b = [1.0, 2.0];
        let oracle = |x: &[f64], _| {
            let mut r = a.mul_vec(x);
            r.iter_mut().zip(&b).for_each(|(r, b)| *r -= b);
            Ok((r, Some(a.clone())))
        };
        let (x, rep) = newton_solve(oracle, vec![0.0, 0.0], 1e-12, 10).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!((x[1] - 0.5).abs() < 1e-15 && (x[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn scalar_quadratic_convergence() {
        // x^3 - 2 = 0
        let oracle = |x: &[f64], _| {
            let j = CscMatrix::from_triplets(1, 1, &[(0, 0, 3.0 * x[0] * x[0])]);
            Ok((vec![x[0].powi(3) - 2.0], Some(j)))
        };
        let (x, rep) = newton_solve(oracle, vec![1.0], 1e-13, 20).unwrap();
        assert!((x[0] - 2f64.cbrt()).abs() < 1e-13);
        let r = &rep.residuals;
        let n = r.len();
        assert!(r[n - 2] < 1e-3 * r[n - 3].max(1e-300).sqrt() || r[n - 1] == 0.0 || n < 4);
    }

    #[test]
    fn reports_non_convergence() {
        let oracle = |x: &[f64], _| {
            let j = CscMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]);
            Ok((vec![x[0].atan() + 10.0], Some(j)))
        };
        let e = newton_solve(oracle, vec![0.0], 1e-12, 3).unwrap_err();
        assert!(matches!(e, Error::NewtonNonConvergence { iterations: 3, .. }));
    }
}
