//! Flat `key = value` configuration files.
//!
//! Lines are `key = value`; `#` starts a comment. `preset` selects the base
//! parameter set (`rising_bubble`, `initial_reconstruction`, `custom`) and
//! `scale` its size (`full` or `desk`). Every other key overrides one field;
//! see [`KEYS`]. Values marked optional accept `auto`.

use crate::error::{AppError, AppResult};
use crate::preset::{PresetName, ScenarioPreset, StopKind};
use std::path::Path;

/// Recognized keys besides `preset` and `scale`.
pub const KEYS: &[&str] = &[
    "rho1",
    "rho2",
    "eta1",
    "eta2",
    "sigma",
    "eps",
    "mobility",
    "relaxation",
    "gravity_x",
    "gravity_y",
    "width",
    "height",
    "horizon",
    "tau",
    "mesh_nx",
    "mesh_ny",
    "fixed_mesh",
    "theta",
    "v_max",
    "v_min",
    "side_bumps",
    "bottom_top_bumps",
    "volume_nx",
    "volume_ny",
    "volume_width",
    "control_samples",
    "alpha",
    "alpha_i",
    "alpha_v",
    "alpha_b",
    "bubble_x",
    "bubble_y",
    "bubble_r",
    "bubble_inside",
    "target_x",
    "target_y",
    "target_r",
    "target_inside",
    "ui_init",
    "max_iters",
    "stop",
    "stop_tol",
    "armijo_c",
    "initial_step",
    "seed",
    "gradcheck_steps",
    "gradcheck_directions",
    "gradcheck_h",
    "vtk_every",
];

fn num(v: &str) -> Result<f64, String> {
    v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("`{v}` is not a finite number"))
}

fn count(v: &str) -> Result<usize, String> {
    v.parse::<usize>().map_err(|_| format!("`{v}` is not a nonnegative integer"))
}

fn flag(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{v}` is not a boolean")),
    }
}

fn auto<T>(v: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, String> {
    if v == "auto" {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

impl ScenarioPreset {
    /// Sets one key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "rho1" => self.rho1 = num(v)?,
            "rho2" => self.rho2 = num(v)?,
            "eta1" => self.eta1 = num(v)?,
            "eta2" => self.eta2 = num(v)?,
            "sigma" => self.sigma = num(v)?,
            "eps" => self.eps = num(v)?,
            "mobility" => self.mobility = auto(v, num)?,
            "relaxation" => self.relaxation = num(v)?,
            "gravity_x" => self.gravity[0] = num(v)?,
            "gravity_y" => self.gravity[1] = num(v)?,
            "width" => self.width = num(v)?,
            "height" => self.height = num(v)?,
            "horizon" => self.horizon = num(v)?,
            "tau" => self.tau = num(v)?,
            "mesh_nx" => self.mesh_nx = count(v)?,
            "mesh_ny" => self.mesh_ny = count(v)?,
            "fixed_mesh" => self.fixed_mesh = flag(v)?,
            "theta" => self.theta = num(v)?,
            "v_max" => self.v_max = num(v)?,
            "v_min" => self.v_min = auto(v, num)?,
            "side_bumps" => self.side_bumps = count(v)?,
            "bottom_top_bumps" => self.bottom_top_bumps = count(v)?,
            "volume_nx" => self.volume_nx = count(v)?,
            "volume_ny" => self.volume_ny = count(v)?,
            "volume_width" => self.volume_width = num(v)?,
            "control_samples" => self.control_samples = auto(v, count)?,
            "alpha" => self.alpha = num(v)?,
            "alpha_i" => self.alpha_i = num(v)?,
            "alpha_v" => self.alpha_v = num(v)?,
            "alpha_b" => self.alpha_b = num(v)?,
            "bubble_x" => self.phi0.center[0] = num(v)?,
            "bubble_y" => self.phi0.center[1] = num(v)?,
            "bubble_r" => self.phi0.radius = num(v)?,
            "bubble_inside" => self.phi0.inside = num(v)?,
            "target_x" => self.target.center[0] = num(v)?,
            "target_y" => self.target.center[1] = num(v)?,
            "target_r" => self.target.radius = num(v)?,
            "target_inside" => self.target.inside = num(v)?,
            "ui_init" => self.ui_init = if v == "none" { None } else { Some(num(v)?) },
            "max_iters" => self.max_iters = count(v)?,
            "stop" => {
                self.stop = match v {
                    "gradient_factor" => StopKind::GradientFactor,
                    "directional" => StopKind::Directional,
                    _ => return Err(format!("`{v}` is not one of gradient_factor, directional")),
                }
            }
            "stop_tol" => self.stop_tol = num(v)?,
            "armijo_c" => self.armijo_c = num(v)?,
            "initial_step" => self.initial_step = num(v)?,
            "seed" => self.seed = v.parse().map_err(|_| format!("`{v}` is not a seed"))?,
            "gradcheck_steps" => self.gradcheck_steps = count(v)?,
            "gradcheck_directions" => self.gradcheck_directions = count(v)?,
            "gradcheck_h" => {
                self.gradcheck_h = v.split(',').map(|s| num(s.trim())).collect::<Result<_, _>>()?;
            }
            "vtk_every" => self.vtk_every = count(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }
}

fn base(name: &str, scale: &str, errors: &mut Vec<String>) -> ScenarioPreset {
    let Some(n) = PresetName::parse(name) else {
        errors.push(format!("preset: unknown preset `{name}`"));
        return ScenarioPreset::rising_bubble();
    };
    match scale {
        "full" => ScenarioPreset::full(n),
        "desk" => ScenarioPreset::desk(n),
        _ => {
            errors.push(format!("scale: `{scale}` is not one of full, desk"));
            ScenarioPreset::full(n)
        }
    }
}

/// Splits `key = value` text into pairs, reporting malformed lines.
fn pairs(text: &str, errors: &mut Vec<String>) -> Vec<(usize, String, String)> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => out.push((i + 1, k.trim().to_string(), v.trim().to_string())),
            _ => errors.push(format!("line {}: expected `key = value`, got `{line}`", i + 1)),
        }
    }
    out
}

/// Builds a preset from configuration text and `KEY=VAL` overrides applied
/// after it. All problems are reported together.
pub fn parse_str(text: &str, overrides: &[String]) -> AppResult<ScenarioPreset> {
    let mut errors = Vec::new();
    let mut entries = pairs(text, &mut errors);
    for o in overrides {
        match o.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => entries.push((0, k.trim().to_string(), v.trim().to_string())),
            _ => errors.push(format!("override `{o}`: expected KEY=VAL")),
        }
    }
    let pick = |key: &str, default: &str| {
        entries
            .iter()
            .rev()
            .find(|(_, k, _)| k == key)
            .map(|(_, _, v)| v.clone())
            .unwrap_or_else(|| default.to_string())
    };
    let mut p = base(&pick("preset", "rising_bubble"), &pick("scale", "full"), &mut errors);
    let mut seen = std::collections::HashSet::new();
    for (line, k, v) in &entries {
        let at = if *line == 0 { "override".to_string() } else { format!("line {line}") };
        if *line > 0 && !seen.insert(k.clone()) {
            errors.push(format!("{at}: duplicate key `{k}`"));
            continue;
        }
        if k == "preset" || k == "scale" {
            continue;
        }
        if let Err(e) = p.set(k, v) {
            errors.push(format!("{at}: {k}: {e}"));
        }
    }
    p.deltas = differing_keys(&p, &ScenarioPreset::full(p.name));
    p.desk = !p.deltas.is_empty();
    errors.extend(p.violations());
    if errors.is_empty() {
        Ok(p)
    } else {
        Err(AppError::Config(errors))
    }
}

pub fn parse_config(path: &Path, overrides: &[String]) -> AppResult<ScenarioPreset> {
    let text = std::fs::read_to_string(path).map_err(AppError::io(path))?;
    parse_str(&text, overrides)
}

/// Complete configuration text; parsing it reproduces `preset`.
pub fn config_text(p: &ScenarioPreset) -> String {
    let opt = |x: Option<f64>| x.map_or("auto".to_string(), |v| format!("{v:e}"));
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    kv("preset", p.name.to_string());
    kv("scale", "full".into());
    for (k, v) in [
        ("rho1", p.rho1),
        ("rho2", p.rho2),
        ("eta1", p.eta1),
        ("eta2", p.eta2),
        ("sigma", p.sigma),
        ("eps", p.eps),
        ("relaxation", p.relaxation),
        ("gravity_x", p.gravity[0]),
        ("gravity_y", p.gravity[1]),
        ("width", p.width),
        ("height", p.height),
        ("horizon", p.horizon),
        ("tau", p.tau),
        ("theta", p.theta),
        ("v_max", p.v_max),
        ("volume_width", p.volume_width),
        ("alpha", p.alpha),
        ("alpha_i", p.alpha_i),
        ("alpha_v", p.alpha_v),
        ("alpha_b", p.alpha_b),
        ("bubble_x", p.phi0.center[0]),
        ("bubble_y", p.phi0.center[1]),
        ("bubble_r", p.phi0.radius),
        ("bubble_inside", p.phi0.inside),
        ("target_x", p.target.center[0]),
        ("target_y", p.target.center[1]),
        ("target_r", p.target.radius),
        ("target_inside", p.target.inside),
        ("stop_tol", p.stop_tol),
        ("armijo_c", p.armijo_c),
        ("initial_step", p.initial_step),
    ] {
        kv(k, format!("{v:e}"));
    }
    kv("mobility", opt(p.mobility));
    kv("v_min", opt(p.v_min));
    kv("ui_init", p.ui_init.map_or("none".to_string(), |v| format!("{v:e}")));
    for (k, v) in [
        ("mesh_nx", p.mesh_nx),
        ("mesh_ny", p.mesh_ny),
        ("side_bumps", p.side_bumps),
        ("bottom_top_bumps", p.bottom_top_bumps),
        ("volume_nx", p.volume_nx),
        ("volume_ny", p.volume_ny),
        ("max_iters", p.max_iters),
        ("gradcheck_steps", p.gradcheck_steps),
        ("gradcheck_directions", p.gradcheck_directions),
        ("vtk_every", p.vtk_every),
    ] {
        kv(k, v.to_string());
    }
    kv("control_samples", p.control_samples.map_or("auto".to_string(), |v| v.to_string()));
    kv("fixed_mesh", p.fixed_mesh.to_string());
    kv(
        "stop",
        match p.stop {
            StopKind::GradientFactor => "gradient_factor".into(),
            StopKind::Directional => "directional".into(),
        },
    );
    kv("seed", p.seed.to_string());
    kv("gradcheck_h", p.gradcheck_h.iter().map(|h| format!("{h:e}")).collect::<Vec<_>>().join(", "));
    s
}

/// Keys whose values differ between `a` and `b`.
pub fn differing_keys(a: &ScenarioPreset, b: &ScenarioPreset) -> Vec<String> {
    let (ta, tb) = (config_text(a), config_text(b));
    ta.lines()
        .zip(tb.lines())
        .filter(|(x, y)| x != y)
        .filter_map(|(x, _)| x.split_once(" = ").map(|(k, _)| k.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_only_loads_defaults() {
        let p = parse_str("preset = rising_bubble\n", &[]).unwrap();
        assert_eq!(p, ScenarioPreset::rising_bubble());
        assert!(!p.desk);
    }

    #[test]
    fn override_is_flagged() {
        let p = parse_str("preset = rising_bubble", &["sigma=10".into()]).unwrap();
        assert_eq!(p.sigma, 10.0);
        assert!(p.desk);
        assert_eq!(p.deltas, vec!["sigma".to_string()]);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let e = parse_str("alpha_b = 0.5", &[]).unwrap_err();
        assert!(e.to_string().contains("must equal 1"), "{e}");
    }

    #[test]
    fn all_violations_are_listed() {
        let text = "preset = rising_bubble\nbogus = 1\neps = abc\nnot a pair\ntau = -1\n";
        let AppError::Config(errs) = parse_str(text, &[]).unwrap_err() else { panic!() };
        assert!(errs.iter().any(|e| e.contains("bogus") && e.contains("unknown key")));
        assert!(errs.iter().any(|e| e.contains("eps")));
        assert!(errs.iter().any(|e| e.contains("line 4")));
        assert!(errs.iter().any(|e| e.contains("tau must be positive")));
    }

    #[test]
    fn every_documented_key_is_settable() {
        for k in KEYS {
            let mut p = ScenarioPreset::rising_bubble();
            let v = match *k {
                "fixed_mesh" => "true",
                "stop" => "directional",
                "gradcheck_h" => "1e-3, 1e-4",
                "mobility" | "v_min" | "control_samples" => "auto",
                "bubble_inside" | "target_inside" => "1",
                "ui_init" => "none",
                _ => "2",
            };
            p.set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }
}
