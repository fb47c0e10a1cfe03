//! Command-line driver: configuration, subcommands and exit codes.

pub mod commands;
pub mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use parallax_core::genprobe::GenError;
use thiserror::Error;

use crate::config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "parallax",
    version,
    about = "Embedding probes and cross-family parallax deltas"
)]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true, default_value = "parallax.json")]
    pub config: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Load every configured input and report per-file pass/fail.
    Validate,
    /// Cross-validate probes and write the F1 matrices.
    Cv,
    /// Train deployment probes and score the topic corpora.
    Score,
    /// Run the parallax suite and write delta reports.
    Parallax,
    /// Generate country corpora through the HTTP endpoint.
    Generate,
    /// Re-render reports from stored results.
    Report,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(parallax_core::Error),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Generation(#[from] GenError),
}

impl From<parallax_core::Error> for CliError {
    fn from(e: parallax_core::Error) -> Self {
        match e {
            parallax_core::Error::InvalidConfig(msg) => CliError::Config(msg),
            e => CliError::Data(e),
        }
    }
}

impl CliError {
    /// 1 for data or validation failures, 2 for configuration, 3 when the
    /// generation endpoint fails.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Validation(_) => 1,
            CliError::Generation(e) if e.is_endpoint_failure() => 3,
            CliError::Generation(_) => 1,
        }
    }
}

/// Runs one parsed invocation, printing progress to stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        output_dir: cli.output_dir.clone(),
        parallelism: cli.parallelism,
    };
    let cfg = RunConfig::load(&cli.config, &overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &cfg))
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<(), CliError> {
    match command {
        Command::Validate => {
            let checks = commands::validate(cfg);
            for c in &checks {
                match &c.outcome {
                    Ok(()) => println!("PASS {}", c.subject),
                    Err(e) => println!("FAIL {}: {e}", c.subject),
                }
            }
            match checks.iter().find(|c| c.outcome.is_err()) {
                Some(c) => Err(CliError::Validation(format!(
                    "validation failed: {}: {}",
                    c.subject,
                    c.outcome.as_ref().unwrap_err()
                ))),
                None => Ok(()),
            }
        }
        Command::Cv => {
            let (zh, en) = commands::cv(cfg)?;
            println!(
                "wrote {}x{} Chinese and {}x{} Western F1 matrices to {}",
                zh.rows.len(),
                zh.cols.len(),
                en.rows.len(),
                en.cols.len(),
                cfg.output_dir.display()
            );
            Ok(())
        }
        Command::Score => {
            let n = commands::score(cfg)?;
            println!("wrote {n} model scores to {}", cfg.results_dir().display());
            Ok(())
        }
        Command::Parallax => {
            let report = commands::parallax(cfg)?;
            print!("{}", commands::format_deltas(&report));
            Ok(())
        }
        Command::Generate => {
            print!("{}", commands::generate(cfg)?);
            Ok(())
        }
        Command::Report => {
            let rendered = commands::report(cfg)?;
            println!("rendered {}", rendered.join(", "));
            Ok(())
        }
    }
}

/// Parses `args`, runs, and maps the result to a process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
