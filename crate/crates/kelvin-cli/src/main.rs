//! `kelvin`: spectrum, steady states, trajectories, rates, optimization and
//! reproduction targets from a JSON config.

mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kelvin::experiments::TargetId;
use kelvin::protocol::Engine;
use kelvin::KelvinError;
use serde_json::json;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Fock,
    Cm,
}

#[derive(Parser)]
#[command(name = "kelvin", version, about = "Bath-reset cooling of a free-fermion chain")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config engine.
    #[arg(long, global = true, value_enum)]
    engine: Option<EngineArg>,
    /// Worker threads.
    #[arg(long, global = true, env = "KELVIN_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Mode energies and Bogoliubov angles.
    Spectrum,
    /// Per-mode steady state of the cycle map.
    Steady,
    /// Cycle-by-cycle evolution from an initial state.
    Trajectory,
    /// Averaged cooling and heating rates with their steady energies.
    Rates,
    /// Optimize couplings, frequency and cycle time.
    Optimize,
    /// Run a built-in reproduction target and check its expected values.
    Reproduce {
        #[arg(value_parser = parse_target)]
        target: TargetId,
    },
}

fn parse_target(s: &str) -> Result<TargetId, String> {
    s.parse().map_err(|e: KelvinError| e.to_string())
}

pub enum CliError {
    Kelvin(KelvinError),
    Io(std::io::Error),
    /// Reproduction ran but some checks failed.
    Checks(Vec<String>),
}

impl From<KelvinError> for CliError {
    fn from(e: KelvinError) -> Self {
        CliError::Kelvin(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Documented exit codes.
fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Checks(_) => 1,
        CliError::Kelvin(k) => match k {
            KelvinError::Domain(_) | KelvinError::Validation(_) => 2,
            KelvinError::NonUniqueFixedPoint { .. } => 3,
            KelvinError::UnsupportedCombination(_) => 4,
            KelvinError::OptimizationFailed(_) => 5,
            _ => 7,
        },
        CliError::Io(_) => 6,
    }
}

fn error_report(e: &CliError) -> serde_json::Value {
    let code = exit_code(e);
    match e {
        CliError::Checks(failed) => json!({"error": "checks_failed", "exit_code": code, "failed": failed}),
        CliError::Io(io) => json!({"error": "io", "exit_code": code, "message": io.to_string()}),
        CliError::Kelvin(k) => {
            let kind = match k {
                KelvinError::Domain(_) | KelvinError::Validation(_) => "invalid_config",
                KelvinError::NonUniqueFixedPoint { .. } => "non_unique_fixed_point",
                KelvinError::UnsupportedCombination(_) => "unsupported_combination",
                KelvinError::OptimizationFailed(_) => "optimization_failed",
                _ => "numerical",
            };
            let mut v = json!({"error": kind, "exit_code": code, "message": k.to_string()});
            if let KelvinError::NonUniqueFixedPoint { dim } = k {
                v["unit_eigenspace_dim"] = json!(dim);
            }
            v
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let out = cli.out.clone();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = error_report(&e);
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_default());
            if let Some(dir) = out {
                if let Ok(o) = output::OutDir::create(&dir) {
                    let _ = o.json("error.json", &report);
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let engine = cli.engine.map(|e| match e {
        EngineArg::Fock => Engine::Fock,
        EngineArg::Cm => Engine::Cm,
    });
    if let Cmd::Reproduce { target } = cli.cmd {
        let dir = cli.out.ok_or_else(|| KelvinError::Validation("--out is required".into()))?;
        return commands::reproduce(target, cli.seed, &dir);
    }
    let path = cli.config.ok_or_else(|| KelvinError::Validation("--config is required".into()))?;
    let mut cfg = config::ExperimentConfig::load(&path)?;
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(e) = engine {
        cfg.engine = Some(e);
    }
    let dir = cli
        .out
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| KelvinError::Validation("no output directory: pass --out or set 'output'".into()))?;
    let ctx = commands::Ctx::new(cfg, &dir)?;
    match cli.cmd {
        Cmd::Spectrum => ctx.spectrum(),
        Cmd::Steady => ctx.steady(),
        Cmd::Trajectory => ctx.trajectory(),
        Cmd::Rates => ctx.rates(),
        Cmd::Optimize => ctx.optimize(),
        Cmd::Reproduce { .. } => unreachable!(),
    }
}
