//! Batch driver: parse a run file, apply flag overrides, run one workflow.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::Outcome;
pub use config::{LoadedConfig, Overrides, RunConfig, Suite};
pub use error::{CliError, EXIT_ACCEPTANCE, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION};

#[derive(Debug, Parser)]
#[command(name = "levynoise", version, about = "Simulate and verify Lévy-driven random fields")]
pub struct Cli {
    /// Run file (TOML). Without one, built-in defaults apply.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Monte Carlo replicas.
    #[arg(long, global = true, value_name = "N")]
    pub replicas: Option<usize>,
    /// Worker threads for replica loops.
    #[arg(long, global = true, value_name = "K")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one noise field and summarize its moments.
    Simulate,
    /// Run an acceptance suite.
    Verify {
        #[arg(long, value_enum)]
        suite: Option<Suite>,
    },
    /// Solve the heat or wave equation on the configured grid.
    Solve,
    /// Tabulate temperedness and solvability of the Riesz density.
    Existence,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            replicas: self.replicas,
            threads: self.threads,
            out: self.out.clone(),
        }
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => LoadedConfig::from_path(path)?,
        None => LoadedConfig::parse("")?,
    };
    cfg.apply(&cli.overrides());
    let work = || match &cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Verify { suite } => {
            let suite = suite.or(cfg.config.verify.suite).unwrap_or(Suite::White);
            commands::verify(&cfg, suite)
        }
        Command::Solve => commands::solve(&cfg),
        Command::Existence => commands::existence(&cfg),
    };
    match cfg.threads()? {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::validation("threads", e.to_string()))?
            .install(work),
        None => work(),
    }
}

/// Parses `args`, runs, reports on stdout/stderr and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            // A closed stdout (e.g. piped into `head`) must not turn a
            // finished run into a failure.
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{}", outcome.message);
            for f in &outcome.files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
