//! Presets, configuration files, output writers and the pipelines behind the
//! `chns` command-line tool.

pub mod config;
pub mod error;
pub mod output;
pub mod preset;
pub mod run;

pub use config::{parse_config, parse_str};
pub use error::{AppError, AppResult};
pub use preset::{make_phase_profile, PresetName, ScenarioPreset};
