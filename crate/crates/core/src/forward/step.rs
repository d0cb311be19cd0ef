use super::assembly::{residual_jacobian, Fields, Physics, StepCtx, StepKind};
use super::disc::{Discretization, Layout};
use super::newton::{newton_solve, NewtonReport};
use crate::error::Result;

/// Absolute Newton tolerance on the algebraic residual.
pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 25;

/// Everything one step needs besides the lagged fields.
pub struct StepInput<'a> {
    pub disc: &'a Discretization,
    pub physics: &'a Physics,
    pub tau: f64,
    /// Assembled volume-force load `(B_V u_V, w)`.
    pub force: &'a [f64],
    /// Boundary velocity values aligned with `disc.proj.dofs()`.
    pub bvals: &'a [f64],
    /// Linearize `W'_+` about the initial guess.
    pub frozen: bool,
}

/// Lagged fields of a step, interpolated to the step's mesh.
#[derive(Clone, Debug, Default)]
pub struct Lagged {
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    /// Phase field two levels back; empty for the first step.
    pub phi2: Vec<f64>,
}

/// Unknowns of one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSolution {
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub lam: f64,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
}

fn with_boundary(disc: &Discretization, v: &[f64], bvals: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    for (&d, &g) in disc.proj.dofs().iter().zip(bvals) {
        v[d] = g;
    }
    v
}

/// First step: Cahn–Hilliard with the initial transport, then the linear
/// momentum system for the new velocity.
pub fn init_step(inp: &StepInput<'_>, lag: &Lagged) -> Result<(StepSolution, [NewtonReport; 2])> {
    let disc = inp.disc;
    let ctx = StepCtx { disc, phys: inp.physics, tau: inp.tau, kind: StepKind::Init };
    let ch = disc.offsets(Layout::CahnHilliard);
    let n1 = disc.n1;
    let mut x0 = lag.phi.clone();
    x0.extend_from_slice(&lag.mu);
    let frozen = inp.frozen.then(|| lag.phi.clone());
    let base = Fields {
        v: &[],
        p: &[],
        lam: 0.0,
        phi: &[],
        mu: &[],
        v_prev: &lag.v,
        phi_prev: &lag.phi,
        mu_prev: &[],
        phi_prev2: &[],
    };
    let (x, rep_ch) = newton_solve(
        |x, jac| {
            let mut f = base;
            f.phi = &x[..n1];
            f.mu = &x[n1..];
            residual_jacobian(&ctx, Layout::CahnHilliard, &f, inp.force, inp.bvals, frozen.as_deref(), jac)
        },
        x0,
        NEWTON_TOL,
        NEWTON_MAX_ITER,
    )?;
    debug_assert_eq!(ch.n, 2 * n1);
    let phi = x[..n1].to_vec();
    let mu = x[n1..].to_vec();
    let mo = disc.offsets(Layout::Momentum);
    let p_off = mo.p.expect("momentum layout has pressure");
    let mut x0 = with_boundary(disc, &lag.v, inp.bvals);
    x0.extend_from_slice(&lag.p);
    x0.push(0.0);
    let (x, rep_mom) = newton_solve(
        |x, jac| {
            let mut f = base;
            f.v = &x[..p_off];
            f.p = &x[p_off..p_off + n1];
            f.lam = x[p_off + n1];
            f.phi = &phi;
            f.mu = &mu;
            residual_jacobian(&ctx, Layout::Momentum, &f, inp.force, inp.bvals, None, jac)
        },
        x0,
        NEWTON_TOL,
        NEWTON_MAX_ITER,
    )?;
    let sol = StepSolution { v: x[..p_off].to_vec(), p: x[p_off..p_off + n1].to_vec(), lam: x[p_off + n1], phi, mu };
    Ok((sol, [rep_ch, rep_mom]))
}

/// Coupled step for `m > 1`, solved monolithically by Newton's method.
pub fn two_step(inp: &StepInput<'_>, lag: &Lagged) -> Result<(StepSolution, NewtonReport)> {
    let disc = inp.disc;
    let ctx = StepCtx { disc, phys: inp.physics, tau: inp.tau, kind: StepKind::TwoStep };
    let off = disc.offsets(Layout::Coupled);
    let (op, ol, of, om) = (off.p.unwrap(), off.lam.unwrap(), off.phi.unwrap(), off.mu.unwrap());
    let mut x0 = with_boundary(disc, &lag.v, inp.bvals);
    x0.extend_from_slice(&lag.p);
    x0.push(0.0);
    x0.extend_from_slice(&lag.phi);
    x0.extend_from_slice(&lag.mu);
    let frozen = inp.frozen.then(|| lag.phi.clone());
    let (x, rep) = newton_solve(
        |x, jac| {
            let f = split_coupled(x, off, lag);
            residual_jacobian(&ctx, Layout::Coupled, &f, inp.force, inp.bvals, frozen.as_deref(), jac)
        },
        x0,
        NEWTON_TOL,
        NEWTON_MAX_ITER,
    )?;
    let sol = StepSolution {
        v: x[..op].to_vec(),
        p: x[op..ol].to_vec(),
        lam: x[ol],
        phi: x[of..om].to_vec(),
        mu: x[om..].to_vec(),
    };
    Ok((sol, rep))
}

pub(crate) fn split_coupled<'a>(x: &'a [f64], off: super::disc::Offsets, lag: &'a Lagged) -> Fields<'a> {
    let (op, ol, of, om) = (off.p.unwrap(), off.lam.unwrap(), off.phi.unwrap(), off.mu.unwrap());
    Fields {
        v: &x[..op],
        p: &x[op..ol],
        lam: x[ol],
        phi: &x[of..om],
        mu: &x[om..],
        v_prev: &lag.v,
        phi_prev: &lag.phi,
        mu_prev: &lag.mu,
        phi_prev2: &lag.phi2,
    }
}
