use chns_app::run::{adapt_demo, gradcheck, optimize, simulate, OutputDir};
use chns_app::{parse_config, parse_str, AppResult};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "chns", version, about = "Phase-field two-phase flow simulation and optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; nothing is written without it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Preset name, optionally with `:desk` (e.g. `rising_bubble:desk`).
    #[arg(long, global = true)]
    preset: Option<String>,

    /// `KEY=VAL` applied after the configuration file.
    #[arg(long = "override", global = true)]
    overrides: Vec<String>,

    /// Keep the base mesh for all time levels.
    #[arg(long, global = true)]
    fixed_mesh: bool,

    /// Optimizer iteration cap.
    #[arg(long, global = true)]
    max_iters: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Forward run with the preset's initial control.
    Simulate,
    /// Optimal control run.
    Optimize,
    /// Adjoint gradient against finite differences.
    Gradcheck,
    /// Mesh adaptation to the initial interface.
    AdaptDemo,
}

fn run(cli: Cli) -> AppResult<()> {
    let mut overrides = Vec::new();
    let mut head = String::new();
    if let Some(p) = &cli.preset {
        let (name, scale) = p.split_once(':').unwrap_or((p, "full"));
        head = format!("preset = {name}\nscale = {scale}\n");
    }
    if cli.fixed_mesh {
        overrides.push("fixed_mesh=true".to_string());
    }
    if let Some(n) = cli.max_iters {
        overrides.push(format!("max_iters={n}"));
    }
    overrides.extend(cli.overrides.iter().cloned());
    let preset = match &cli.config {
        Some(path) if cli.preset.is_none() => parse_config(path, &overrides)?,
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(chns_app::AppError::io(path))?;
            let body: String = text
                .lines()
                .filter(|l| !matches!(l.split('=').next().map(str::trim), Some("preset" | "scale")))
                .map(|l| format!("{l}\n"))
                .collect();
            parse_str(&(head + &body), &overrides)?
        }
        None => parse_str(&head, &overrides)?,
    };
    let out = OutputDir::create(cli.out.as_deref())?;
    match cli.command {
        Cmd::Simulate => {
            let r = simulate(&preset, &out)?;
            let last = r.records.last().expect("initial state recorded");
            println!(
                "steps {}  tau {:.3e}  energy {:.6e} -> {:.6e}  max Newton {}",
                r.trajectory.steps(),
                r.trajectory.tau,
                r.records[0].energy,
                last.energy,
                r.max_newton_iterations()
            );
        }
        Cmd::Optimize => {
            let r = optimize(&preset, &out)?;
            let js = r.log.accepted_j();
            println!(
                "iterations {}  J {:.6e} -> {:.6e}  tracking {:.6e} -> {:.6e}  stop {:?}",
                js.len().saturating_sub(1),
                js.first().copied().unwrap_or(f64::NAN),
                js.last().copied().unwrap_or(f64::NAN),
                r.initial_tracking,
                r.final_tracking,
                r.log.stop
            );
        }
        Cmd::Gradcheck => {
            let r = gradcheck(&preset, &out)?;
            for (k, (e, f)) in r.report.min_errors().iter().zip(&r.families).enumerate() {
                println!("direction {k} ({f}): min relative error {e:.3e}");
            }
        }
        Cmd::AdaptDemo => {
            let r = adapt_demo(&preset, &out)?;
            println!(
                "triangles {}  cells across band {}  band resolution {:.2}",
                r.mesh.num_triangles(),
                r.cells_across,
                r.band_resolution
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
