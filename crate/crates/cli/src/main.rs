//! `optomech`: simulate, map and analyse a nanowire in an optical force field.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use optomech::io::Provenance;

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "optomech", version, about)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `simulation.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default `output.dir`, then `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with status 4 when a configured tolerance is exceeded.
    #[arg(long, global = true)]
    assert: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Langevin trajectory and its Welch spectrum.
    Simulate,
    /// Exact projected spectrum at the working point, with a doublet fit.
    Psd,
    /// Driven-response force map over the grid.
    MapForce,
    /// Stability map, threshold and area-versus-power curve.
    Stability,
    /// Fitted versus predicted splitting maps.
    Splitting,
    /// Instability threshold at every grid node.
    Threshold,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (raw, base) = match &cli.config {
        Some(p) => (
            RunConfig::load(p)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (RunConfig::default(), PathBuf::new()),
    };
    let config = raw.resolve(&base)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads: must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--threads: {e}")))?;
    }
    let seed = cli.seed.unwrap_or(raw.simulation.seed);
    let out = cli
        .out
        .or_else(|| raw.output.dir.as_ref().map(|d| base.join(d)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Context {
        prov: Provenance::new(config.hash(), seed),
        config,
        out,
        seed,
        assert: cli.assert,
    };
    ctx.write_config()?;
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Psd => commands::psd(&ctx),
        Command::MapForce => commands::map_force(&ctx),
        Command::Stability => commands::stability(&ctx),
        Command::Splitting => commands::splitting(&ctx),
        Command::Threshold => commands::threshold(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("optomech: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
