use crate::control::{boundary_traces, volume_loads, AnsatzSet};
use crate::error::Result;
use crate::fem::{p1_mass, CscMatrix, FeSpace, Pattern, TraceProjector};
use crate::mesh::Mesh;
use std::sync::{Arc, OnceLock};

/// Local unknown slots of one triangle: 12 velocity, 3 pressure, the gauge
/// multiplier, 3 phase field, 3 chemical potential.
pub(crate) const NLOC: usize = 22;
pub(crate) const LV: usize = 0;
pub(crate) const LP: usize = 12;
pub(crate) const LLAM: usize = 15;
pub(crate) const LPHI: usize = 16;
pub(crate) const LMU: usize = 19;

/// Which unknown blocks a system carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// `(v, p, lambda, phi, mu)`
    Coupled,
    /// `(phi, mu)`
    CahnHilliard,
    /// `(v, p, lambda)`
    Momentum,
}

/// Global offsets of the blocks present in a layout.
#[derive(Clone, Copy, Debug)]
pub struct Offsets {
    pub v: Option<usize>,
    pub p: Option<usize>,
    pub lam: Option<usize>,
    pub phi: Option<usize>,
    pub mu: Option<usize>,
    pub n: usize,
}

impl Layout {
    pub fn offsets(self, n1: usize, n2: usize) -> Offsets {
        match self {
            Layout::Coupled => Offsets {
                v: Some(0),
                p: Some(2 * n2),
                lam: Some(2 * n2 + n1),
                phi: Some(2 * n2 + n1 + 1),
                mu: Some(2 * n2 + 2 * n1 + 1),
                n: 2 * n2 + 3 * n1 + 1,
            },
            Layout::CahnHilliard => Offsets { v: None, p: None, lam: None, phi: Some(0), mu: Some(n1), n: 2 * n1 },
            Layout::Momentum => {
                Offsets { v: Some(0), p: Some(2 * n2), lam: Some(2 * n2 + n1), phi: None, mu: None, n: 2 * n2 + n1 + 1 }
            }
        }
    }

    fn index(self) -> usize {
        match self {
            Layout::Coupled => 0,
            Layout::CahnHilliard => 1,
            Layout::Momentum => 2,
        }
    }
}

/// Element-to-global maps and the sparsity pattern of one layout.
pub(crate) struct SystemMap {
    pub offsets: Offsets,
    pub pattern: Arc<Pattern>,
    /// Per triangle, global index of every local slot (`usize::MAX` if absent).
    pub global: Vec<[usize; NLOC]>,
    /// Per triangle, `NLOC x NLOC` storage positions (`u32::MAX` if absent).
    pub pos: Vec<u32>,
}

/// Per-mesh cache of spaces, boundary data, control loads and system maps.
pub struct Discretization {
    pub mesh: Arc<Mesh>,
    pub n1: usize,
    pub n2: usize,
    pub proj: TraceProjector,
    /// Flag per P2 vector dof.
    pub is_boundary: Vec<bool>,
    /// `(f_l, w)` per volume ansatz function.
    pub volume_loads: Vec<Vec<f64>>,
    /// `Pi(g_l)` per boundary ansatz function, aligned with `proj.dofs()`.
    pub boundary_traces: Vec<Vec<f64>>,
    pub mass: CscMatrix,
    maps: [OnceLock<SystemMap>; 3],
}

impl Discretization {
    pub fn new(mesh: &Arc<Mesh>, volume: &AnsatzSet, boundary: &AnsatzSet) -> Result<Self> {
        let p2 = FeSpace::p2(mesh);
        let n2 = p2.n_scalar();
        let n1 = mesh.num_vertices();
        let proj = TraceProjector::new(mesh)?;
        let mut is_boundary = vec![false; 2 * n2];
        for &d in proj.dofs() {
            is_boundary[d] = true;
        }
        Ok(Discretization {
            mesh: mesh.clone(),
            n1,
            n2,
            is_boundary,
            volume_loads: volume_loads(volume, mesh)?,
            boundary_traces: boundary_traces(boundary, &proj),
            proj,
            mass: p1_mass(mesh)?,
            maps: [OnceLock::new(), OnceLock::new(), OnceLock::new()],
        })
    }

    pub fn offsets(&self, layout: Layout) -> Offsets {
        layout.offsets(self.n1, self.n2)
    }

    pub(crate) fn map(&self, layout: Layout) -> &SystemMap {
        self.maps[layout.index()].get_or_init(|| self.build_map(layout))
    }

    fn build_map(&self, layout: Layout) -> SystemMap {
        let off = self.offsets(layout);
        let p2 = FeSpace::p2(&self.mesh);
        let nt = self.mesh.num_triangles();
        let mut global = Vec::with_capacity(nt);
        for t in 0..nt {
            let tri = self.mesh.triangles()[t];
            let (d2, _) = p2.local_dofs(t);
            let mut g = [usize::MAX; NLOC];
            if let Some(o) = off.v {
                for i in 0..6 {
                    g[LV + i] = o + d2[i];
                    g[LV + 6 + i] = o + self.n2 + d2[i];
                }
            }
            if let (Some(op), Some(ol)) = (off.p, off.lam) {
                for i in 0..3 {
                    g[LP + i] = op + tri[i];
                }
                g[LLAM] = ol;
            }
            if let (Some(of), Some(om)) = (off.phi, off.mu) {
                for i in 0..3 {
                    g[LPHI + i] = of + tri[i];
                    g[LMU + i] = om + tri[i];
                }
            }
            global.push(g);
        }
        // The gauge multiplier couples to pressure only; everything else is
        // an element clique, which keeps the pattern structurally symmetric.
        let couples = |a: usize, b: usize| -> bool {
            let la = a == LLAM;
            let lb = b == LLAM;
            match (la, lb) {
                (false, false) => true,
                (true, true) => true,
                (true, false) => (LP..LP + 3).contains(&b),
                (false, true) => (LP..LP + 3).contains(&a),
            }
        };
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); off.n];
        for g in &global {
            for b in 0..NLOC {
                if g[b] == usize::MAX {
                    continue;
                }
                let col = &mut cols[g[b]];
                for a in 0..NLOC {
                    if g[a] != usize::MAX && couples(a, b) {
                        col.push(g[a]);
                    }
                }
            }
        }
        let pattern = Arc::new(Pattern::from_columns(off.n, cols));
        let mut pos = vec![u32::MAX; nt * NLOC * NLOC];
        for (t, g) in global.iter().enumerate() {
            for a in 0..NLOC {
                for b in 0..NLOC {
                    if g[a] != usize::MAX && g[b] != usize::MAX && couples(a, b) {
                        let k = pattern.position(g[a], g[b]).expect("element entry in pattern");
                        pos[(t * NLOC + a) * NLOC + b] = k as u32;
                    }
                }
            }
        }
        SystemMap { offsets: off, pattern, global, pos }
    }

    /// Boundary values `sum_l c_l Pi(g_l)` aligned with `proj.dofs()`.
    pub fn boundary_values(&self, coeffs: &[f64]) -> Vec<f64> {
        crate::control::apply_bb(&self.boundary_traces, coeffs, self.proj.dofs().len())
    }

    /// Load vector `sum_l c_l (f_l, w)`.
    pub fn volume_force(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.n2];
        for (f, &c) in self.volume_loads.iter().zip(coeffs) {
            if c != 0.0 {
                out.iter_mut().zip(f).for_each(|(o, fv)| *o += c * fv);
            }
        }
        out
    }
}
