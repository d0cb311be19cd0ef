use super::disc::{Discretization, Layout, LLAM, LMU, LP, LPHI, LV, NLOC};
use crate::error::Result;
use crate::fem::basis::{p1_at, p1_grad, p2_vec_at, p2_vec_grad, ElementQuad};
use crate::fem::{CscMatrix, FeSpace};
use crate::material::{FreeEnergy, MaterialLaws};
use crate::mesh::quadrature;

/// Material and model constants of the flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Physics {
    pub laws: MaterialLaws,
    pub energy: FreeEnergy,
    pub sigma: f64,
    pub eps: f64,
    pub mobility: f64,
    pub gravity: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    /// First step: Cahn–Hilliard with old transport, then momentum.
    Init,
    /// Coupled two-step scheme.
    TwoStep,
}

/// Origin of a coefficient entering the step residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Src {
    VCur,
    PhiCur,
    MuCur,
    VPrev,
    PhiPrev,
    MuPrev,
    PhiPrev2,
}

impl Src {
    pub const ALL: [Src; 7] =
        [Src::VCur, Src::PhiCur, Src::MuCur, Src::VPrev, Src::PhiPrev, Src::MuPrev, Src::PhiPrev2];

    fn index(self) -> usize {
        self as usize
    }

    pub fn is_vector(self) -> bool {
        matches!(self, Src::VCur | Src::VPrev)
    }

    pub fn is_lagged(self) -> bool {
        matches!(self, Src::VPrev | Src::PhiPrev | Src::MuPrev | Src::PhiPrev2)
    }
}

/// Where each coefficient slot of the residual reads from.
///
/// Momentum:
/// `(1/tau)(1/2 (rho(phi_a) + rho(phi_b)) v - rho(phi_b) v_old, w)
///  + a(rho(phi_c) v_c - rho_delta b grad mu_c, v, w) + (2 eta(phi_d) Dv, Dw)
///  - (mu_e grad phi_f + rho(phi_g) g, w) - (f, w) - (p, div w)`.
///
/// Cahn–Hilliard:
/// `(1/tau)(phi - phi_old, Psi) + (b grad mu, grad Psi) + (v_t . grad phi_t, Psi)`,
/// `sigma eps (grad phi, grad Phi) + (sigma/eps)(W'_+(phi) + W'_-(phi_w), Phi) - (mu, Phi)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Slots {
    pub phi_a: Src,
    pub phi_b: Src,
    pub v_old: Src,
    pub phi_c: Src,
    pub v_c: Src,
    pub mu_c: Src,
    pub phi_d: Src,
    pub mu_e: Src,
    pub phi_f: Src,
    pub phi_g: Src,
    pub phi_old: Src,
    pub v_t: Src,
    pub phi_t: Src,
    pub phi_w: Src,
}

impl Slots {
    pub fn of(kind: StepKind) -> Slots {
        use Src::*;
        match kind {
            StepKind::Init => Slots {
                phi_a: PhiCur,
                phi_b: PhiPrev,
                v_old: VPrev,
                phi_c: PhiCur,
                v_c: VPrev,
                mu_c: MuCur,
                phi_d: PhiCur,
                mu_e: MuCur,
                phi_f: PhiPrev,
                phi_g: PhiPrev,
                phi_old: PhiPrev,
                v_t: VPrev,
                phi_t: PhiPrev,
                phi_w: PhiPrev,
            },
            StepKind::TwoStep => Slots {
                phi_a: PhiPrev,
                phi_b: PhiPrev2,
                v_old: VPrev,
                phi_c: PhiPrev,
                v_c: VPrev,
                mu_c: MuPrev,
                phi_d: PhiPrev,
                mu_e: MuCur,
                phi_f: PhiPrev,
                phi_g: PhiPrev,
                phi_old: PhiPrev,
                v_t: VCur,
                phi_t: PhiPrev,
                phi_w: PhiPrev,
            },
        }
    }
}

/// Coefficient vectors of one step, all on the step's mesh. Blocks that a
/// residual does not read may be empty.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Fields<'a> {
    pub v: &'a [f64],
    pub p: &'a [f64],
    pub lam: f64,
    pub phi: &'a [f64],
    pub mu: &'a [f64],
    pub v_prev: &'a [f64],
    pub phi_prev: &'a [f64],
    pub mu_prev: &'a [f64],
    pub phi_prev2: &'a [f64],
}

impl<'a> Fields<'a> {
    pub fn get(&self, s: Src) -> &'a [f64] {
        match s {
            Src::VCur => self.v,
            Src::PhiCur => self.phi,
            Src::MuCur => self.mu,
            Src::VPrev => self.v_prev,
            Src::PhiPrev => self.phi_prev,
            Src::MuPrev => self.mu_prev,
            Src::PhiPrev2 => self.phi_prev2,
        }
    }
}

pub(crate) struct StepCtx<'a> {
    pub disc: &'a Discretization,
    pub phys: &'a Physics,
    pub tau: f64,
    pub kind: StepKind,
}

/// Residual and (optionally) Jacobian of one step system.
///
/// Rows of boundary velocity dofs are replaced by `v_b - bvals`; `force`
/// is the assembled volume-force load. With `frozen`, `W'_+` is linearized
/// about that phase field.
pub(crate) fn residual_jacobian(
    ctx: &StepCtx<'_>,
    layout: Layout,
    f: &Fields<'_>,
    force: &[f64],
    bvals: &[f64],
    frozen: Option<&[f64]>,
    want_jac: bool,
) -> Result<(Vec<f64>, Option<CscMatrix>)> {
    let disc = ctx.disc;
    let phys = ctx.phys;
    let mesh = &disc.mesh;
    let map = disc.map(layout);
    let off = map.offsets;
    let n2 = disc.n2;
    let p2 = FeSpace::p2(mesh);
    let sl = Slots::of(ctx.kind);
    let laws = &phys.laws;
    let w = &phys.energy;
    let (tau, b, g) = (ctx.tau, phys.mobility, phys.gravity);
    let (se, s_e) = (phys.sigma * phys.eps, phys.sigma / phys.eps);
    let rd = laws.rho_delta();
    let has_mom = off.v.is_some();
    let has_p = off.p.is_some();
    let has_ch = off.phi.is_some();
    let mu_coupled = has_mom && has_ch && sl.mu_e == Src::MuCur;
    let v_coupled = has_mom && has_ch && sl.v_t == Src::VCur;

    let rule = quadrature(5)?;
    let mut eq = ElementQuad::new(&rule);
    let mut res = vec![0.0; off.n];
    let mut jac = want_jac.then(|| CscMatrix::zeros(map.pattern.clone()));
    let mut a = [[0.0; NLOC]; NLOC];
    for t in 0..mesh.num_triangles() {
        eq.reinit(mesh, t, &rule);
        let tri = mesh.triangles()[t];
        let (d2, _) = p2.local_dofs(t);
        let dl = eq.dl;
        let mut r = [0.0; NLOC];
        if want_jac {
            a.iter_mut().for_each(|row| row.fill(0.0));
        }
        let g_mu_c = if has_mom { p1_grad(f.get(sl.mu_c), &tri, &dl) } else { [0.0; 2] };
        let g_phi_f = if has_mom { p1_grad(f.get(sl.phi_f), &tri, &dl) } else { [0.0; 2] };
        let g_phi_t = if has_ch { p1_grad(f.get(sl.phi_t), &tri, &dl) } else { [0.0; 2] };
        let g_phi = if has_ch { p1_grad(f.phi, &tri, &dl) } else { [0.0; 2] };
        let g_mu = if has_ch { p1_grad(f.mu, &tri, &dl) } else { [0.0; 2] };
        for q in 0..eq.len() {
            let jw = eq.jw[q];
            let l = eq.l[q];
            let n = &eq.n2[q];
            let dn = &eq.dn2[q];
            if has_mom {
                let v = p2_vec_at(f.v, n2, &d2, n);
                let gv = p2_vec_grad(f.v, n2, &d2, dn);
                let p = if has_p { p1_at(f.p, &tri, l) } else { 0.0 };
                let rho_a = laws.density(p1_at(f.get(sl.phi_a), &tri, l));
                let rho_b = laws.density(p1_at(f.get(sl.phi_b), &tri, l));
                let vold = p2_vec_at(f.get(sl.v_old), n2, &d2, n);
                let rho_c = laws.density(p1_at(f.get(sl.phi_c), &tri, l));
                let vc = p2_vec_at(f.get(sl.v_c), n2, &d2, n);
                let u = [rho_c * vc[0] - rd * b * g_mu_c[0], rho_c * vc[1] - rd * b * g_mu_c[1]];
                let eta = laws.viscosity(p1_at(f.get(sl.phi_d), &tri, l));
                let mu_e = p1_at(f.get(sl.mu_e), &tri, l);
                let rho_g = laws.density(p1_at(f.get(sl.phi_g), &tri, l));
                let m = 0.5 * (rho_a + rho_b) / tau;
                let dv = sym(&gv);
                let mut ugn = [0.0; 6];
                for k in 0..6 {
                    ugn[k] = u[0] * dn[k][0] + u[1] * dn[k][1];
                }
                for i in 0..6 {
                    for c in 0..2 {
                        let mut s = (m * v[c] - rho_b / tau * vold[c]) * n[i];
                        s += 0.5 * ((u[0] * gv[c][0] + u[1] * gv[c][1]) * n[i] - ugn[i] * v[c]);
                        s += 2.0 * eta * (dv[c][0] * dn[i][0] + dv[c][1] * dn[i][1]);
                        s -= (mu_e * g_phi_f[c] + rho_g * g[c]) * n[i];
                        s -= p * dn[i][c];
                        r[LV + 6 * c + i] += jw * s;
                    }
                }
                if want_jac {
                    for i in 0..6 {
                        for j in 0..6 {
                            let gg = dn[i][0] * dn[j][0] + dn[i][1] * dn[j][1];
                            let diag = m * n[i] * n[j] + 0.5 * (ugn[j] * n[i] - ugn[i] * n[j]);
                            for c in 0..2 {
                                for d in 0..2 {
                                    let mut s = eta * dn[j][c] * dn[i][d];
                                    if c == d {
                                        s += eta * gg + diag;
                                    }
                                    a[LV + 6 * c + i][LV + 6 * d + j] += jw * s;
                                }
                            }
                        }
                        for c in 0..2 {
                            for j in 0..3 {
                                if has_p {
                                    a[LV + 6 * c + i][LP + j] -= jw * l[j] * dn[i][c];
                                }
                                if mu_coupled {
                                    a[LV + 6 * c + i][LMU + j] -= jw * l[j] * g_phi_f[c] * n[i];
                                }
                            }
                        }
                    }
                }
                if has_p {
                    let div = gv[0][0] + gv[1][1];
                    for i in 0..3 {
                        r[LP + i] += jw * (div + f.lam) * l[i];
                    }
                    r[LLAM] += jw * p;
                    if want_jac {
                        for i in 0..3 {
                            for j in 0..6 {
                                a[LP + i][LV + j] += jw * l[i] * dn[j][0];
                                a[LP + i][LV + 6 + j] += jw * l[i] * dn[j][1];
                            }
                            a[LP + i][LLAM] += jw * l[i];
                            a[LLAM][LP + i] += jw * l[i];
                        }
                    }
                }
            }
            if has_ch {
                let phi = p1_at(f.phi, &tri, l);
                let mu = p1_at(f.mu, &tri, l);
                let phi_old = p1_at(f.get(sl.phi_old), &tri, l);
                let vt = p2_vec_at(f.get(sl.v_t), n2, &d2, n);
                let phi_w = p1_at(f.get(sl.phi_w), &tri, l);
                let (wp, wpp) = match frozen {
                    Some(fz) => {
                        let x0 = p1_at(fz, &tri, l);
                        let h = w.plus(2, x0);
                        (w.plus(1, x0) + h * (phi - x0), h)
                    }
                    None => (w.plus(1, phi), w.plus(2, phi)),
                };
                let adv = vt[0] * g_phi_t[0] + vt[1] * g_phi_t[1];
                let src = (phi - phi_old) / tau + adv;
                let chem = s_e * (wp + w.minus(1, phi_w)) - mu;
                for i in 0..3 {
                    let gmi = g_mu[0] * dl[i][0] + g_mu[1] * dl[i][1];
                    let gpi = g_phi[0] * dl[i][0] + g_phi[1] * dl[i][1];
                    r[LPHI + i] += jw * (src * l[i] + b * gmi);
                    r[LMU + i] += jw * (se * gpi + chem * l[i]);
                }
                if want_jac {
                    for i in 0..3 {
                        for j in 0..3 {
                            let ll = l[i] * l[j];
                            let gg = dl[i][0] * dl[j][0] + dl[i][1] * dl[j][1];
                            a[LPHI + i][LPHI + j] += jw * ll / tau;
                            a[LPHI + i][LMU + j] += jw * b * gg;
                            a[LMU + i][LPHI + j] += jw * (se * gg + s_e * wpp * ll);
                            a[LMU + i][LMU + j] -= jw * ll;
                        }
                        if v_coupled {
                            for j in 0..6 {
                                a[LPHI + i][LV + j] += jw * n[j] * g_phi_t[0] * l[i];
                                a[LPHI + i][LV + 6 + j] += jw * n[j] * g_phi_t[1] * l[i];
                            }
                        }
                    }
                }
            }
        }
        let gl = &map.global[t];
        for k in 0..NLOC {
            if gl[k] != usize::MAX {
                res[gl[k]] += r[k];
            }
        }
        if let Some(jm) = jac.as_mut() {
            let base = t * NLOC * NLOC;
            let vals = jm.values_mut();
            for x in 0..NLOC {
                for y in 0..NLOC {
                    let pos = map.pos[base + x * NLOC + y];
                    if pos != u32::MAX && a[x][y] != 0.0 {
                        vals[pos as usize] += a[x][y];
                    }
                }
            }
        }
    }
    if let Some(ov) = off.v {
        for (k, fv) in force.iter().enumerate() {
            res[ov + k] -= fv;
        }
        for (&d, &gv) in disc.proj.dofs().iter().zip(bvals) {
            res[ov + d] = f.v[d] - gv;
            if let Some(jm) = jac.as_mut() {
                jm.set_identity_row(ov + d);
            }
        }
    }
    Ok((res, jac))
}

#[inline]
fn sym(g: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let off = 0.5 * (g[0][1] + g[1][0]);
    [[g[0][0], off], [off, g[1][1]]]
}

/// Gradients of `<Lambda, R>` with respect to each coefficient source.
pub(crate) struct SrcGrads {
    pub g: [Vec<f64>; 7],
}

impl SrcGrads {
    pub fn new(n1: usize, n2: usize) -> Self {
        SrcGrads { g: Src::ALL.map(|s| if s.is_vector() { vec![0.0; 2 * n2] } else { vec![0.0; n1] }) }
    }

    pub fn get(&self, s: Src) -> &[f64] {
        &self.g[s.index()]
    }
}

/// Accumulates `d <Lambda, R> / d(source)` for every slot whose source
/// passes `include`. `adj_v` is the momentum multiplier (boundary entries are
/// ignored), `adj_phi` and `adj_mu` the Cahn–Hilliard multipliers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn vjp(
    ctx: &StepCtx<'_>,
    f: &Fields<'_>,
    adj_v: Option<&[f64]>,
    adj_phi: Option<&[f64]>,
    adj_mu: Option<&[f64]>,
    include: impl Fn(Src) -> bool,
    out: &mut SrcGrads,
) -> Result<()> {
    let disc = ctx.disc;
    let phys = ctx.phys;
    let mesh = &disc.mesh;
    let n2 = disc.n2;
    let p2 = FeSpace::p2(mesh);
    let sl = Slots::of(ctx.kind);
    let laws = &phys.laws;
    let w = &phys.energy;
    let (tau, b, g) = (ctx.tau, phys.mobility, phys.gravity);
    let s_e = phys.sigma / phys.eps;
    let rd = laws.rho_delta();
    let pv_all: Option<Vec<f64>> =
        adj_v.map(|a| a.iter().zip(&disc.is_boundary).map(|(&x, &bd)| if bd { 0.0 } else { x }).collect());
    let on = |s: Src| include(s);
    let rule = quadrature(5)?;
    let mut eq = ElementQuad::new(&rule);
    for t in 0..mesh.num_triangles() {
        eq.reinit(mesh, t, &rule);
        let tri = mesh.triangles()[t];
        let (d2, _) = p2.local_dofs(t);
        let dl = eq.dl;
        for q in 0..eq.len() {
            let jw = eq.jw[q];
            let l = eq.l[q];
            let n = &eq.n2[q];
            let dn = &eq.dn2[q];
            if let Some(pa) = pv_all.as_deref() {
                let pv = p2_vec_at(pa, n2, &d2, n);
                let gp = p2_vec_grad(pa, n2, &d2, dn);
                let v = p2_vec_at(f.v, n2, &d2, n);
                let gv = p2_vec_grad(f.v, n2, &d2, dn);
                let vpv = v[0] * pv[0] + v[1] * pv[1];
                let mut sv = [0.0; 2];
                for bb in 0..2 {
                    sv[bb] = 0.5 * (gv[0][bb] * pv[0] + gv[1][bb] * pv[1] - gp[0][bb] * v[0] - gp[1][bb] * v[1]);
                }
                let scalar = |out: &mut SrcGrads, s: Src, val: f64| {
                    if val != 0.0 {
                        let gvec = &mut out.g[s.index()];
                        for k in 0..3 {
                            gvec[tri[k]] += jw * val * l[k];
                        }
                    }
                };
                if on(sl.phi_a) {
                    let x = p1_at(f.get(sl.phi_a), &tri, l);
                    scalar(out, sl.phi_a, 0.5 / tau * laws.density_deriv(x) * vpv);
                }
                if on(sl.phi_b) {
                    let x = p1_at(f.get(sl.phi_b), &tri, l);
                    let vold = p2_vec_at(f.get(sl.v_old), n2, &d2, n);
                    let e = (0.5 * v[0] - vold[0]) * pv[0] + (0.5 * v[1] - vold[1]) * pv[1];
                    scalar(out, sl.phi_b, laws.density_deriv(x) * e / tau);
                }
                if on(sl.v_old) {
                    let rho_b = laws.density(p1_at(f.get(sl.phi_b), &tri, l));
                    let gvec = &mut out.g[sl.v_old.index()];
                    for k in 0..6 {
                        for c in 0..2 {
                            gvec[c * n2 + d2[k]] -= jw * rho_b / tau * pv[c] * n[k];
                        }
                    }
                }
                if on(sl.phi_c) {
                    let x = p1_at(f.get(sl.phi_c), &tri, l);
                    let vc = p2_vec_at(f.get(sl.v_c), n2, &d2, n);
                    scalar(out, sl.phi_c, laws.density_deriv(x) * (vc[0] * sv[0] + vc[1] * sv[1]));
                }
                if on(sl.v_c) {
                    let rho_c = laws.density(p1_at(f.get(sl.phi_c), &tri, l));
                    let gvec = &mut out.g[sl.v_c.index()];
                    for k in 0..6 {
                        for c in 0..2 {
                            gvec[c * n2 + d2[k]] += jw * rho_c * sv[c] * n[k];
                        }
                    }
                }
                if on(sl.mu_c) {
                    let gvec = &mut out.g[sl.mu_c.index()];
                    for k in 0..3 {
                        gvec[tri[k]] -= jw * rd * b * (dl[k][0] * sv[0] + dl[k][1] * sv[1]);
                    }
                }
                if on(sl.phi_d) {
                    let x = p1_at(f.get(sl.phi_d), &tri, l);
                    let dv = sym(&gv);
                    let dp = sym(&gp);
                    let dd = dv[0][0] * dp[0][0] + 2.0 * dv[0][1] * dp[0][1] + dv[1][1] * dp[1][1];
                    scalar(out, sl.phi_d, 2.0 * laws.viscosity_deriv(x) * dd);
                }
                if on(sl.mu_e) {
                    let gf = p1_grad(f.get(sl.phi_f), &tri, &dl);
                    scalar(out, sl.mu_e, -(gf[0] * pv[0] + gf[1] * pv[1]));
                }
                if on(sl.phi_f) {
                    let mu_e = p1_at(f.get(sl.mu_e), &tri, l);
                    let gvec = &mut out.g[sl.phi_f.index()];
                    for k in 0..3 {
                        gvec[tri[k]] -= jw * mu_e * (dl[k][0] * pv[0] + dl[k][1] * pv[1]);
                    }
                }
                if on(sl.phi_g) {
                    let x = p1_at(f.get(sl.phi_g), &tri, l);
                    scalar(out, sl.phi_g, -laws.density_deriv(x) * (g[0] * pv[0] + g[1] * pv[1]));
                }
            }
            if adj_phi.is_some() || adj_mu.is_some() {
                let pphi = adj_phi.map_or(0.0, |a| p1_at(a, &tri, l));
                let pmu = adj_mu.map_or(0.0, |a| p1_at(a, &tri, l));
                if on(sl.phi_old) && pphi != 0.0 {
                    let gvec = &mut out.g[sl.phi_old.index()];
                    for k in 0..3 {
                        gvec[tri[k]] -= jw * pphi / tau * l[k];
                    }
                }
                if on(sl.v_t) && pphi != 0.0 {
                    let gt = p1_grad(f.get(sl.phi_t), &tri, &dl);
                    let gvec = &mut out.g[sl.v_t.index()];
                    for k in 0..6 {
                        for c in 0..2 {
                            gvec[c * n2 + d2[k]] += jw * gt[c] * pphi * n[k];
                        }
                    }
                }
                if on(sl.phi_t) && pphi != 0.0 {
                    let vt = p2_vec_at(f.get(sl.v_t), n2, &d2, n);
                    let gvec = &mut out.g[sl.phi_t.index()];
                    for k in 0..3 {
                        gvec[tri[k]] += jw * (vt[0] * dl[k][0] + vt[1] * dl[k][1]) * pphi;
                    }
                }
                if on(sl.phi_w) && pmu != 0.0 {
                    let x = p1_at(f.get(sl.phi_w), &tri, l);
                    let val = s_e * w.minus(2, x) * pmu;
                    let gvec = &mut out.g[sl.phi_w.index()];
                    for k in 0..3 {
                        gvec[tri[k]] += jw * val * l[k];
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::AnsatzSet;
    use crate::fem::sparse::dot;
    use crate::material::{FreeEnergy, MaterialLaws};
    use crate::mesh::{build_rect_mesh, Rect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn setup() -> (Discretization, Physics) {
        let m = Arc::new(build_rect_mesh(3, 4, Rect::new(0.0, 0.0, 1.0, 1.5)).unwrap());
        let disc = Discretization::new(&m, &AnsatzSet::default(), &AnsatzSet::default()).unwrap();
        let phys = Physics {
            laws: MaterialLaws::new(1000.0, 100.0, 10.0, 1.0, -1.1, 1.1).unwrap(),
            energy: FreeEnergy::relaxed(50.0).unwrap(),
            sigma: 1.5,
            eps: 0.2,
            mobility: 0.01,
            gravity: [0.0, -0.981],
        };
        (disc, phys)
    }

    struct Data {
        v: Vec<f64>,
        p: Vec<f64>,
        phi: Vec<f64>,
        mu: Vec<f64>,
        vp: Vec<f64>,
        phip: Vec<f64>,
        mup: Vec<f64>,
        phip2: Vec<f64>,
    }

    fn data(disc: &Discretization, rng: &mut ChaCha8Rng) -> Data {
        let (n1, n2) = (disc.n1, disc.n2);
        // Phase values straddle +-1 so the clamp and the convex part are active.
        let mut r = |n: usize, s: f64| (0..n).map(|_| s * rng.random_range(-1.0..1.0)).collect::<Vec<_>>();
        Data {
            v: r(2 * n2, 0.3),
            p: r(n1, 1.0),
            phi: r(n1, 1.05),
            mu: r(n1, 1.0),
            vp: r(2 * n2, 0.3),
            phip: r(n1, 1.05),
            mup: r(n1, 1.0),
            phip2: r(n1, 1.05),
        }
    }

    fn fields(d: &Data) -> Fields<'_> {
        Fields {
            v: &d.v,
            p: &d.p,
            lam: 0.3,
            phi: &d.phi,
            mu: &d.mu,
            v_prev: &d.vp,
            phi_prev: &d.phip,
            mu_prev: &d.mup,
            phi_prev2: &d.phip2,
        }
    }

    fn field_mut(d: &mut Data, s: Src) -> &mut Vec<f64> {
        match s {
            Src::VCur => &mut d.v,
            Src::PhiCur => &mut d.phi,
            Src::MuCur => &mut d.mu,
            Src::VPrev => &mut d.vp,
            Src::PhiPrev => &mut d.phip,
            Src::MuPrev => &mut d.mup,
            Src::PhiPrev2 => &mut d.phip2,
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (disc, phys) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (kind, layout) in [
            (StepKind::TwoStep, Layout::Coupled),
            (StepKind::Init, Layout::CahnHilliard),
            (StepKind::Init, Layout::Momentum),
        ] {
            let ctx = StepCtx { disc: &disc, phys: &phys, tau: 0.01, kind };
            let d = data(&disc, &mut rng);
            let off = disc.offsets(layout);
            let force = vec![0.0; 2 * disc.n2];
            let bvals = vec![0.0; disc.proj.dofs().len()];
            let (_, jac) = residual_jacobian(&ctx, layout, &fields(&d), &force, &bvals, None, true).unwrap();
            let jac = jac.unwrap();
            let dir: Vec<f64> = (0..off.n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let jd = jac.mul_vec(&dir);
            let h = 1e-6;
            let eval = |d: &Data, s: f64| {
                let mut v = d.v.clone();
                let mut p = d.p.clone();
                let mut phi = d.phi.clone();
                let mut mu = d.mu.clone();
                let mut lam = 0.3;
                if let Some(o) = off.v {
                    v.iter_mut().enumerate().for_each(|(k, x)| *x += s * dir[o + k]);
                    p.iter_mut().enumerate().for_each(|(k, x)| *x += s * dir[off.p.unwrap() + k]);
                    lam += s * dir[off.lam.unwrap()];
                }
                if let Some(o) = off.phi {
                    phi.iter_mut().enumerate().for_each(|(k, x)| *x += s * dir[o + k]);
                    mu.iter_mut().enumerate().for_each(|(k, x)| *x += s * dir[off.mu.unwrap() + k]);
                }
                let mut f = fields(d);
                f.v = &v;
                f.p = &p;
                f.phi = &phi;
                f.mu = &mu;
                f.lam = lam;
                residual_jacobian(&ctx, layout, &f, &force, &bvals, None, false).unwrap().0
            };
            let rp = eval(&d, h);
            let rm = eval(&d, -h);
            for k in 0..off.n {
                let fd = (rp[k] - rm[k]) / (2.0 * h);
                assert!(
                    (fd - jd[k]).abs() < 1e-6 * (1.0 + jd[k].abs()),
                    "{kind:?} {layout:?} row {k}: {fd} vs {}",
                    jd[k]
                );
            }
        }
    }

    #[test]
    fn slot_gradients_match_finite_differences() {
        let (disc, phys) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [StepKind::Init, StepKind::TwoStep] {
            for layout in [Layout::Coupled, Layout::CahnHilliard, Layout::Momentum] {
                let ctx = StepCtx { disc: &disc, phys: &phys, tau: 0.01, kind };
                let mut d = data(&disc, &mut rng);
                let off = disc.offsets(layout);
                let force = vec![0.0; 2 * disc.n2];
                let bvals = vec![0.0; disc.proj.dofs().len()];
                let lam: Vec<f64> = (0..off.n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut lam_masked = lam.clone();
                if let Some(o) = off.v {
                    for (k, &bd) in disc.is_boundary.iter().enumerate() {
                        if bd {
                            lam_masked[o + k] = 0.0;
                        }
                    }
                }
                let av = off.v.map(|o| &lam[o..o + 2 * disc.n2]);
                let ap = off.phi.map(|o| &lam[o..o + disc.n1]);
                let am = off.mu.map(|o| &lam[o..o + disc.n1]);
                let mut grads = SrcGrads::new(disc.n1, disc.n2);
                vjp(&ctx, &fields(&d), av, ap, am, |_| true, &mut grads).unwrap();
                for s in Src::ALL {
                    // Sources read by the primary unknowns are covered by the Jacobian test.
                    let primary = matches!(
                        (s, layout),
                        (Src::VCur, Layout::Momentum | Layout::Coupled)
                            | (Src::PhiCur | Src::MuCur, Layout::CahnHilliard | Layout::Coupled)
                    );
                    if primary {
                        continue;
                    }
                    let nfield = field_mut(&mut d, s).len();
                    let dir: Vec<f64> = (0..nfield).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let h = 1e-6;
                    let mut r = [0.0; 2];
                    for (k, sg) in [1.0, -1.0].into_iter().enumerate() {
                        let base = field_mut(&mut d, s).clone();
                        let pert: Vec<f64> = base.iter().zip(&dir).map(|(x, y)| x + sg * h * y).collect();
                        *field_mut(&mut d, s) = pert;
                        let (res, _) =
                            residual_jacobian(&ctx, layout, &fields(&d), &force, &bvals, None, false).unwrap();
                        r[k] = dot(&res, &lam_masked);
                        *field_mut(&mut d, s) = base;
                    }
                    let fd = (r[0] - r[1]) / (2.0 * h);
                    let an = dot(grads.get(s), &dir);
                    assert!(
                        (fd - an).abs() < 1e-6 * (1.0 + an.abs()),
                        "{kind:?} {layout:?} {s:?}: fd {fd} vs adjoint {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn frozen_residual_is_affine() {
        let (disc, phys) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = data(&disc, &mut rng);
        let ctx = StepCtx { disc: &disc, phys: &phys, tau: 0.01, kind: StepKind::Init };
        let force = vec![0.0; 2 * disc.n2];
        let bvals = vec![0.0; disc.proj.dofs().len()];
        let frozen = d.phi.clone();
        let f0 = fields(&d);
        let (r0, j) = residual_jacobian(&ctx, Layout::CahnHilliard, &f0, &force, &bvals, Some(&frozen), true).unwrap();
        let phi2: Vec<f64> = d.phi.iter().map(|x| x + 0.3).collect();
        let mut f1 = f0;
        f1.phi = &phi2;
        let (r1, _) = residual_jacobian(&ctx, Layout::CahnHilliard, &f1, &force, &bvals, Some(&frozen), false).unwrap();
        let mut dir = vec![0.3; disc.n1];
        dir.extend(vec![0.0; disc.n1]);
        let jd = j.unwrap().mul_vec(&dir);
        for k in 0..r0.len() {
            assert!((r1[k] - r0[k] - jd[k]).abs() < 1e-10);
        }
    }
}
