//! Scenario presets and their translation into solver objects.

use crate::error::{AppError, AppResult};
use chns_core::adapt::AdaptConfig;
use chns_core::control::{AnsatzSet, Control, ControlWeights};
use chns_core::fem::ScalarField;
use chns_core::forward::{circle_profile, MeshPlan, Physics, Scenario};
use chns_core::material::{FreeEnergy, MaterialLaws};
use chns_core::mesh::{build_rect_mesh, BoundarySide, Mesh, Rect};
use chns_core::optimize::{OptimizerConfig, StopRule};
use std::fmt;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresetName {
    RisingBubble,
    InitialReconstruction,
    Custom,
}

impl PresetName {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rising_bubble" => Some(PresetName::RisingBubble),
            "initial_reconstruction" => Some(PresetName::InitialReconstruction),
            "custom" => Some(PresetName::Custom),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::RisingBubble => "rising_bubble",
            PresetName::InitialReconstruction => "initial_reconstruction",
            PresetName::Custom => "custom",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Circular sine-ramp phase field. `inside` is the value at the center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
    pub inside: f64,
}

/// Which stopping test the optimizer uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopKind {
    GradientFactor,
    Directional,
}

/// Complete parameter set of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioPreset {
    pub name: PresetName,
    /// Reduced-size variant; `deltas` lists the keys that differ from full scale.
    pub desk: bool,
    pub deltas: Vec<String>,

    pub rho1: f64,
    pub rho2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub sigma: f64,
    pub eps: f64,
    /// `None` selects `eps / 500`.
    pub mobility: Option<f64>,
    pub relaxation: f64,
    pub gravity: [f64; 2],

    pub width: f64,
    pub height: f64,
    pub horizon: f64,
    pub tau: f64,
    pub mesh_nx: usize,
    pub mesh_ny: usize,
    pub fixed_mesh: bool,
    pub theta: f64,
    pub v_max: f64,
    /// `None` selects `(pi eps / 8)^2 / 2`.
    pub v_min: Option<f64>,

    pub side_bumps: usize,
    pub bottom_top_bumps: usize,
    pub volume_nx: usize,
    pub volume_ny: usize,
    pub volume_width: f64,
    /// Time samples of `u_V`, `u_B`; `None` uses one per initial step.
    pub control_samples: Option<usize>,

    pub alpha: f64,
    pub alpha_i: f64,
    pub alpha_v: f64,
    pub alpha_b: f64,

    pub phi0: Circle,
    pub target: Circle,
    /// Constant start value of the initial-field control; its value is also
    /// the prescribed mean.
    pub ui_init: Option<f64>,

    pub max_iters: usize,
    pub stop: StopKind,
    pub stop_tol: f64,
    pub armijo_c: f64,
    pub initial_step: f64,

    pub seed: u64,
    pub gradcheck_steps: usize,
    pub gradcheck_directions: usize,
    pub gradcheck_h: Vec<f64>,
    pub vtk_every: usize,
}

/// Both examples put the lighter fluid, phase value `+1`, inside the circle.
const BUBBLE_PHASE: f64 = 1.0;

impl ScenarioPreset {
    /// Boundary-controlled rising bubble at full scale.
    pub fn rising_bubble() -> Self {
        ScenarioPreset {
            name: PresetName::RisingBubble,
            desk: false,
            deltas: Vec::new(),
            rho1: 1000.0,
            rho2: 100.0,
            eta1: 10.0,
            eta2: 1.0,
            sigma: 15.5972,
            eps: 0.04,
            mobility: None,
            relaxation: 1e4,
            gravity: [0.0, -0.981],
            width: 1.0,
            height: 1.5,
            horizon: 1.0,
            tau: 5e-3,
            mesh_nx: 16,
            mesh_ny: 24,
            fixed_mesh: false,
            theta: 0.5,
            v_max: 3e-4,
            v_min: None,
            side_bumps: 10,
            bottom_top_bumps: 0,
            volume_nx: 0,
            volume_ny: 0,
            volume_width: 0.3,
            control_samples: None,
            alpha: 1e-10,
            alpha_i: 0.0,
            alpha_v: 0.0,
            alpha_b: 1.0,
            phi0: Circle { center: [0.5, 0.75], radius: 0.25, inside: BUBBLE_PHASE },
            target: Circle { center: [0.5, 0.5], radius: 0.25, inside: BUBBLE_PHASE },
            ui_init: None,
            max_iters: 100,
            stop: StopKind::GradientFactor,
            stop_tol: 0.1,
            armijo_c: 1e-4,
            initial_step: 1.0,
            seed: 1,
            gradcheck_steps: 5,
            gradcheck_directions: 3,
            gradcheck_h: vec![1e-3, 1e-4, 1e-5],
            vtk_every: 10,
        }
    }

    /// Reconstruction of an initial phase field at full scale.
    pub fn initial_reconstruction() -> Self {
        ScenarioPreset {
            name: PresetName::InitialReconstruction,
            rho1: 1000.0,
            rho2: 1.0,
            eta1: 10.0,
            eta2: 0.1,
            sigma: 1.245,
            eps: 0.02,
            width: 1.0,
            height: 1.0,
            horizon: 1.5,
            mesh_nx: 16,
            mesh_ny: 16,
            side_bumps: 0,
            alpha: 0.2,
            alpha_i: 1.0,
            alpha_b: 0.0,
            phi0: Circle { center: [0.5, 0.5], radius: 0.25, inside: BUBBLE_PHASE },
            target: Circle { center: [0.5, 0.6], radius: 0.1763040551, inside: BUBBLE_PHASE },
            ui_init: Some(-0.8),
            stop: StopKind::Directional,
            stop_tol: 1e-3,
            ..ScenarioPreset::rising_bubble()
        }
    }

    pub fn full(name: PresetName) -> Self {
        match name {
            PresetName::InitialReconstruction => ScenarioPreset::initial_reconstruction(),
            PresetName::RisingBubble | PresetName::Custom => ScenarioPreset { name, ..ScenarioPreset::rising_bubble() },
        }
    }

    /// Reduced-size variant that runs in minutes on one core.
    pub fn desk(name: PresetName) -> Self {
        let mut p = ScenarioPreset::full(name);
        match name {
            PresetName::InitialReconstruction => {
                p.set_desk("eps", |p| p.eps = 0.04);
                p.set_desk("horizon", |p| p.horizon = 0.5);
                p.set_desk("tau", |p| p.tau = 0.02);
                p.set_desk("fixed_mesh", |p| p.fixed_mesh = true);
                p.set_desk("max_iters", |p| p.max_iters = 25);
            }
            PresetName::RisingBubble | PresetName::Custom => {
                p.set_desk("eps", |p| p.eps = 0.08);
                p.set_desk("horizon", |p| p.horizon = 0.5);
                p.set_desk("tau", |p| p.tau = 0.01);
                p.set_desk("fixed_mesh", |p| p.fixed_mesh = true);
                p.set_desk("volume_nx", |p| p.volume_nx = 2);
                p.set_desk("volume_ny", |p| p.volume_ny = 2);
                p.set_desk("max_iters", |p| p.max_iters = 20);
            }
        }
        p
    }

    fn set_desk(&mut self, key: &str, f: impl FnOnce(&mut Self)) {
        f(self);
        self.desk = true;
        self.deltas.push(key.to_string());
    }

    pub fn extent(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width, self.height)
    }

    pub fn mobility(&self) -> f64 {
        self.mobility.unwrap_or(self.eps / 500.0)
    }

    pub fn v_min(&self) -> f64 {
        let h = std::f64::consts::PI * self.eps / 8.0;
        self.v_min.unwrap_or(0.5 * h * h)
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.tau).round() as usize
    }

    pub fn samples(&self) -> usize {
        self.control_samples.unwrap_or_else(|| self.steps())
    }

    /// All violated constraints, empty when the preset is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let pos = |v: &mut Vec<String>, k: &str, x: f64| {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{k} must be positive, got {x}"));
            }
        };
        for (k, x) in [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("sigma", self.sigma),
            ("eps", self.eps),
            ("relaxation", self.relaxation),
            ("width", self.width),
            ("height", self.height),
            ("horizon", self.horizon),
            ("tau", self.tau),
            ("v_max", self.v_max),
            ("alpha", self.alpha),
            ("stop_tol", self.stop_tol),
            ("initial_step", self.initial_step),
            ("volume_width", self.volume_width),
        ] {
            pos(&mut v, k, x);
        }
        if let Some(b) = self.mobility {
            pos(&mut v, "mobility", b);
        }
        if let Some(m) = self.v_min {
            pos(&mut v, "v_min", m);
        }
        let ratio = self.horizon / self.tau;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            v.push(format!("horizon {} is not a multiple of tau {}", self.horizon, self.tau));
        }
        for (k, a) in [("alpha_i", self.alpha_i), ("alpha_v", self.alpha_v), ("alpha_b", self.alpha_b)] {
            if !(a >= 0.0) {
                v.push(format!("{k} must be nonnegative, got {a}"));
            }
        }
        let sum = self.alpha_i + self.alpha_v + self.alpha_b;
        if (sum - 1.0).abs() > 1e-12 {
            v.push(format!("alpha_i + alpha_v + alpha_b must equal 1, got {sum}"));
        }
        if self.mesh_nx == 0 || self.mesh_ny == 0 {
            v.push("mesh_nx and mesh_ny must be at least 1".into());
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            v.push(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        if !self.fixed_mesh && self.v_min() >= self.v_max {
            v.push(format!("v_min {} must be below v_max {}", self.v_min(), self.v_max));
        }
        for (k, c) in [("bubble", &self.phi0), ("target", &self.target)] {
            pos(&mut v, &format!("{k}_r"), c.radius);
            if c.inside.abs() != 1.0 {
                v.push(format!("{k}_inside must be 1 or -1, got {}", c.inside));
            }
        }
        if let Some(u) = self.ui_init {
            if !(u.abs() < 1.0) {
                v.push(format!("ui_init must lie in (-1, 1), got {u}"));
            }
        }
        if self.alpha_i > 0.0 && self.ui_init.is_none() {
            v.push("alpha_i > 0 needs ui_init".into());
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            v.push(format!("armijo_c must lie in (0, 1), got {}", self.armijo_c));
        }
        if self.samples() == 0 {
            v.push("control_samples must be at least 1".into());
        }
        if self.gradcheck_h.is_empty() || self.gradcheck_h.iter().any(|h| !(*h > 0.0)) {
            v.push("gradcheck_h must be a nonempty list of positive step sizes".into());
        }
        if self.vtk_every == 0 {
            v.push("vtk_every must be at least 1".into());
        }
        v
    }

    pub fn validate(&self) -> AppResult<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(AppError::Config(v))
        }
    }

    pub fn physics(&self) -> AppResult<Physics> {
        Ok(Physics {
            laws: MaterialLaws::with_default_clamp(self.rho1, self.rho2, self.eta1, self.eta2)?,
            energy: FreeEnergy::relaxed(self.relaxation)?,
            sigma: self.sigma,
            eps: self.eps,
            mobility: self.mobility(),
            gravity: self.gravity,
        })
    }

    pub fn boundary_set(&self) -> AppResult<AnsatzSet> {
        let ext = self.extent();
        let mut items = Vec::new();
        if self.side_bumps > 0 {
            for side in [BoundarySide::Left, BoundarySide::Right] {
                items.extend(AnsatzSet::wall_bumps(&ext, side, self.side_bumps));
            }
        }
        if self.bottom_top_bumps > 0 {
            for side in [BoundarySide::Bottom, BoundarySide::Top] {
                items.extend(AnsatzSet::wall_bumps(&ext, side, self.bottom_top_bumps));
            }
        }
        Ok(AnsatzSet::new(items)?)
    }

    pub fn volume_set(&self) -> AppResult<AnsatzSet> {
        if self.volume_nx == 0 || self.volume_ny == 0 {
            return Ok(AnsatzSet::default());
        }
        Ok(AnsatzSet::new(AnsatzSet::volume_grid(&self.extent(), self.volume_nx, self.volume_ny, self.volume_width))?)
    }

    pub fn scenario(&self) -> AppResult<Scenario> {
        self.validate()?;
        let (phi0, eps) = (self.phi0, self.eps);
        let sc = Scenario {
            physics: self.physics()?,
            horizon: self.horizon,
            tau: self.tau,
            v0: Arc::new(|_| [0.0, 0.0]),
            phi0: Arc::new(move |x| phase_value(&phi0, eps, x)),
            volume: self.volume_set()?,
            boundary: self.boundary_set()?,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn base_mesh(&self) -> AppResult<Arc<Mesh>> {
        Ok(Arc::new(build_rect_mesh(self.mesh_nx, self.mesh_ny, self.extent())?))
    }

    pub fn adapt_config(&self) -> AppResult<AdaptConfig> {
        Ok(AdaptConfig::new(self.theta, self.v_max, self.v_min())?)
    }

    pub fn mesh_plan(&self) -> AppResult<MeshPlan> {
        let base = self.base_mesh()?;
        if self.fixed_mesh {
            Ok(MeshPlan::Fixed(base))
        } else {
            Ok(MeshPlan::Adaptive { base, config: self.adapt_config()? })
        }
    }

    pub fn weights(&self) -> AppResult<ControlWeights> {
        Ok(ControlWeights::new(self.alpha, self.alpha_i, self.alpha_v, self.alpha_b)?)
    }

    /// Desired phase field on `mesh`.
    pub fn target_field(&self, mesh: &Arc<Mesh>) -> ScalarField {
        make_phase_profile(&self.target, self.eps, mesh)
    }

    /// Zero time-dependent controls, plus the constant initial field when
    /// this preset controls it.
    pub fn initial_control(&self, mesh: &Arc<Mesh>) -> AppResult<Control> {
        let mut u = Control::zeros(self.horizon, self.samples(), self.volume_set()?.len(), self.boundary_set()?.len());
        if let Some(c) = self.ui_init {
            u.u_i = Some(ScalarField::constant(mesh, c));
        }
        Ok(u)
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            max_iter: self.max_iters,
            armijo_c: self.armijo_c,
            initial_step: self.initial_step,
            stop: match self.stop {
                StopKind::GradientFactor => StopRule::GradientFactor(self.stop_tol),
                StopKind::Directional => StopRule::DirectionalDerivative(self.stop_tol),
            },
            ..OptimizerConfig::default()
        }
    }
}

fn phase_value(c: &Circle, eps: f64, x: [f64; 2]) -> f64 {
    -c.inside * circle_profile(c.center, c.radius, eps, x)
}

/// Sine-ramp profile of `circle` interpolated at the vertices of `mesh`.
pub fn make_phase_profile(circle: &Circle, eps: f64, mesh: &Arc<Mesh>) -> ScalarField {
    let c = *circle;
    ScalarField::from_fn(mesh, move |x| phase_value(&c, eps, x))
}
