use std::fs::File;
use std::io::{self, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use vecrisk_cli::{inspect_policy, prepare_and_execute, ExperimentConfig, Extras};

#[derive(Parser)]
#[command(name = "vecrisk", version, about = "Risk-sensitive fetch/offload simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and list every problem.
    Validate { config: PathBuf },
    /// Run a single-cell config, dumping records and final agent tables.
    Run { config: PathBuf },
    /// Run every (scheme, rho, V) cell of a config.
    Sweep { config: PathBuf },
    /// Print the policy stored in a checkpoint CSV.
    InspectPolicy { checkpoint: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let violations = cfg.validate();
            if violations.is_empty() {
                println!("{}: ok, {} cells", config.display(), cfg.cells().len());
                return Ok(());
            }
            for v in &violations {
                println!("{v}");
            }
            bail!("{} violation(s)", violations.len())
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let cells = cfg.cells().len();
            if cells != 1 {
                bail!("`run` needs exactly one (scheme, rho, V) cell, config has {cells}; use `sweep`");
            }
            finish(prepare_and_execute(
                &cfg,
                Extras {
                    records: true,
                    checkpoint: true,
                },
            )?)
        }
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            finish(prepare_and_execute(&cfg, Extras::default())?)
        }
        Command::InspectPolicy { checkpoint } => {
            let file = File::open(&checkpoint).with_context(|| format!("opening {}", checkpoint.display()))?;
            inspect_policy(BufReader::new(file), io::stdout().lock())
        }
    }
}

fn finish(report: vecrisk_cli::Report) -> anyhow::Result<()> {
    let failed: Vec<String> = report
        .failures()
        .map(|c| format!("{}_{}_{}", c.scheme, c.rho, c.vues))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        bail!(
            "{} of {} cells failed: {}",
            failed.len(),
            report.cells.len(),
            failed.join(", ")
        )
    }
}
