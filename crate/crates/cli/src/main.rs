//! Deterministic experiment runner.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::commands::Command;
use crate::error::CliError;
use crate::output::Run;

#[derive(Debug, Parser)]
#[command(name = "bohm-lab", version, about = "Seeded pilot-wave experiments with CSV/JSON artifacts")]
struct Cli {
    /// RNG seed (required here or in the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output prefix; artifacts are written as `<prefix>_<name>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 uses every core). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let file = match &cli.config {
        Some(p) => config::load_file(p)?,
        None => config::FileConfig::default(),
    };
    let name = cli.command.name();
    let common = config::resolve_common(cli.seed, cli.workers, cli.out, &file.common, name)?;
    if common.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(common.workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    }
    let mut out = Run::new(name, common.seed, &common.out);
    cli.command.run(&file.params, &mut out)?;
    out.finish()
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("bohm-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
