//! `symdyn`: run periodic-orbit experiments from a JSON config.
//!
//! Exit codes: 0 success, 2 schema or input error, 3 budget exceeded,
//! 4 numerical failure, 1 I/O failure.

mod config;
mod experiments;
mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;
use symdyn::ErrorClass;

use crate::config::ExperimentConfig;
use crate::output::RunContext;

/// Default output directory when neither `--out` nor the config sets one.
const OUT_DIR_ENV: &str = "SYMDYN_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "symdyn-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] symdyn::Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Schema(_) => 2,
            Self::Io(_) => 1,
            Self::Core(e) => match e.class() {
                ErrorClass::Input => 2,
                ErrorClass::Budget => 3,
                ErrorClass::Numerical => 4,
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "symdyn", version, about = "Periodic orbit statistics for subshifts of finite type")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config and the environment.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the catalogue of experiment kinds as JSON.
    ListExperiments,
}

fn run(config_path: &PathBuf, out: Option<PathBuf>, threads: Option<usize>) -> Result<(), CliError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", config_path.display())))?;
    let raw: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("config is not JSON: {e}")))?;
    let cfg = ExperimentConfig::parse(&text)?;
    if threads == Some(0) {
        return Err(CliError::Schema("--threads must be positive".into()));
    }
    let dir = out
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let tables = pool.install(|| {
        let resolved = cfg.resolve()?;
        experiments::run(&cfg.experiment, &resolved, &cfg.params)
    })?;
    let ctx = RunContext {
        config: &raw,
        experiment: &cfg.experiment,
        seed: cfg.seed,
        threads: pool.current_num_threads(),
    };
    for path in output::write_tables(&dir, &tables, &ctx)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListExperiments => {
            let catalog = serde_json::json!({ "experiments": experiments::CATALOG });
            println!("{}", serde_json::to_string_pretty(&catalog).expect("static catalogue"));
            ExitCode::SUCCESS
        }
        Command::Run { config, out, threads } => match run(&config, out, threads) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("symdyn: {e}");
                ExitCode::from(e.exit_code())
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Schema("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(symdyn::Error::Reducible { from: 0, to: 1 }).exit_code(), 2);
        assert_eq!(CliError::Core(symdyn::Error::BudgetExceeded { needed: 5, budget: 1 }).exit_code(), 3);
        let ambiguous = symdyn::Error::BranchAmbiguity {
            t: 1.0,
            nearest: 0.1,
            second: 0.1,
        };
        assert_eq!(CliError::Core(ambiguous).exit_code(), 4);
        assert_eq!(CliError::Core(symdyn::Error::PoorFit { residual: 1.0 }).exit_code(), 4);
    }
}
