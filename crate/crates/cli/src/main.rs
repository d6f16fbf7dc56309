use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod output;

use commands::Context;
use error::CliError;
use qreset::exec::ExecPolicy;

/// Reset simulation, Krotov optimization and analysis studies.
#[derive(Debug, Parser)]
#[command(name = "qreset", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Propagate the configured protocol and report the reset error.
    Simulate,
    /// Krotov optimization from the configured guess.
    Optimize,
    /// Reset error against protocol duration.
    Sweep,
    /// Decay rates over a grid of level splittings.
    RatesMap,
    /// Spectra of the control fields.
    Spectrum,
    /// Operation points of the sequential-resonance protocol.
    OperationPoints,
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let path = cli.config.clone().ok_or_else(|| CliError::Input {
        path: PathBuf::from("--config"),
        message: "a configuration file is required".into(),
    })?;
    let cfg = config::load(&path)?;
    let policy = match cli.threads {
        Some(0) => {
            return Err(CliError::Input { path: PathBuf::from("--threads"), message: "must be at least 1".into() })
        }
        Some(1) => ExecPolicy::Sequential,
        Some(n) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("thread pool already initialized: {e}");
            }
            ExecPolicy::Parallel
        }
        None => ExecPolicy::default(),
    };
    let out_dir = cli
        .output
        .clone()
        .or_else(|| cfg.config.output.dir.as_ref().map(|d| cfg.base_dir.join(d)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Context::new(cfg, policy)?;
    let artifacts = match cli.command {
        Command::Simulate => commands::simulate(&ctx)?,
        Command::Optimize => commands::optimize(&ctx)?,
        Command::Sweep => commands::sweep(&ctx)?,
        Command::RatesMap => commands::rates_map_cmd(&ctx)?,
        Command::Spectrum => commands::spectrum(&ctx)?,
        Command::OperationPoints => commands::operation_points(&ctx)?,
    };
    log::debug!("writing {}", artifacts.names().collect::<Vec<_>>().join(", "));
    artifacts.commit(&out_dir)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
