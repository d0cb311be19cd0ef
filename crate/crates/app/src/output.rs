//! Legacy-VTK field files, CSV logs and the run manifest.

use crate::config::config_text;
use crate::error::{AppError, AppResult};
use crate::preset::ScenarioPreset;
use chns_core::control::{Control, TimeSeries};
use chns_core::fem::ScalarField;
use chns_core::forward::FieldState;
use chns_core::mesh::Mesh;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Creates `path` and hands a buffered writer to `f`.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> AppResult<()> {
    let file = File::create(path).map_err(AppError::io(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(AppError::io(path))
}

fn vtk_mesh(w: &mut (impl Write + ?Sized), mesh: &Mesh, title: &str) -> std::io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.num_vertices())?;
    for p in mesh.vertices() {
        writeln!(w, "{:.16e} {:.16e} 0", p[0], p[1])?;
    }
    let nt = mesh.num_triangles();
    writeln!(w, "CELLS {} {}", nt, 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {}", mesh.num_vertices())
}

fn vtk_scalar(w: &mut (impl Write + ?Sized), name: &str, values: &[f64]) -> std::io::Result<()> {
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(w, "{v:.16e}")?;
    }
    Ok(())
}

/// One time level: velocity at the vertices as a vector, pressure, phase
/// field and chemical potential as scalars.
pub fn write_state_vtk(w: &mut (impl Write + ?Sized), state: &FieldState) -> std::io::Result<()> {
    let mesh = &state.mesh;
    let nv = mesh.num_vertices();
    let n2 = state.v.len() / 2;
    vtk_mesh(w, mesh, &format!("state t={}", state.time))?;
    writeln!(w, "VECTORS v double")?;
    for i in 0..nv {
        writeln!(w, "{:.16e} {:.16e} 0", state.v[i], state.v[n2 + i])?;
    }
    vtk_scalar(w, "p", &state.p)?;
    vtk_scalar(w, "phi", &state.phi)?;
    vtk_scalar(w, "mu", &state.mu)
}

/// A P1 field such as the initial-field control.
pub fn write_scalar_vtk(w: &mut (impl Write + ?Sized), name: &str, field: &ScalarField) -> std::io::Result<()> {
    vtk_mesh(w, &field.mesh, name)?;
    vtk_scalar(w, name, &field.values)
}

/// `|u(t)|` per time sample, one row per sample.
pub fn write_control_norms(w: &mut (impl Write + ?Sized), u: &Control) -> std::io::Result<()> {
    writeln!(w, "sample,t,norm_u_v,norm_u_b")?;
    let n = u.u_v.n_samples().max(u.u_b.n_samples());
    let (nv, nb) = (u.u_v.norms(), u.u_b.norms());
    let dt = if u.u_v.n_samples() == n { u.u_v.dt() } else { u.u_b.dt() };
    for k in 0..n {
        let t = (k as f64 + 0.5) * dt;
        writeln!(w, "{k},{t:.12e},{:.12e},{:.12e}", nv.get(k).unwrap_or(&0.0), nb.get(k).unwrap_or(&0.0))?;
    }
    Ok(())
}

/// Coefficients, one row per time sample and channel.
pub fn write_series(w: &mut (impl Write + ?Sized), s: &TimeSeries) -> std::io::Result<()> {
    writeln!(w, "sample,channel,value")?;
    for (k, row) in s.samples.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            writeln!(w, "{k},{c},{v:.16e}")?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Record of a run sufficient to repeat it.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub preset: String,
    /// `full` unless some field differs from the full-scale preset.
    pub variant: String,
    pub deltas: Vec<String>,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<String>,
    #[serde(skip)]
    config: String,
}

impl RunManifest {
    pub fn new(command: &str, preset: &ScenarioPreset) -> Self {
        RunManifest {
            command: command.to_string(),
            preset: preset.name.to_string(),
            variant: if preset.desk { "desk".into() } else { "full".into() },
            deltas: preset.deltas.clone(),
            config_sha256: config_hash(preset),
            seed: preset.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timings: Vec::new(),
            outputs: Vec::new(),
            config: config_text(preset),
        }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = std::time::Instant::now();
        let out = f();
        self.timings.push(StageTiming { stage: stage.into(), seconds: t0.elapsed().as_secs_f64() });
        out
    }

    /// Writes `manifest.json` and the complete configuration as `config.cfg`.
    pub fn write(&self, dir: &Path) -> AppResult<PathBuf> {
        let cfg = dir.join("config.cfg");
        write_file(&cfg, |w| w.write_all(self.config.as_bytes()))?;
        let path = dir.join("manifest.json");
        write_file(&path, |w| {
            serde_json::to_writer_pretty(&mut *w, self).map_err(std::io::Error::other)?;
            writeln!(w)
        })?;
        Ok(path)
    }
}

pub fn config_hash(p: &ScenarioPreset) -> String {
    let digest = Sha256::digest(config_text(p).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
