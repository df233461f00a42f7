//! Command-line front end for `cfe-core`: lattice table files, JSON run
//! configuration, a thread pool for the parallel stages and a manifest with
//! SHA-256 hashes of every artifact.

#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod output;
pub mod reproduce;

use std::io::Write;

pub use crate::cli::{Cli, Command};
pub use crate::commands::Run;
pub use crate::config::RunConfig;
pub use crate::error::{CliError, Result, EXIT_INPUT, EXIT_NUMERIC};

fn common(cmd: &Command) -> &cli::Common {
    match cmd {
        Command::Dividends(a) => &a.common,
        Command::Shapley(a) => &a.common,
        Command::Gibbs(a) => &a.common,
        Command::Meanfield(a) => &a.common,
        Command::Nash(a) => &a.common,
        Command::Reproduce(a) => &a.common,
    }
}

/// Resolves configuration and computes a command without writing anything.
pub fn execute(cli: Cli) -> Result<Run> {
    let c = common(&cli.command);
    let cfg = RunConfig::load_opt(c.config.as_deref())?;
    let threads = c.threads.or(cfg.threads);
    if threads == Some(0) {
        return Err(CliError::Config("threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Dividends(a) => commands::dividends(a, &cfg),
        Command::Shapley(a) => commands::shapley(a, &cfg),
        Command::Gibbs(a) => commands::gibbs(a, &cfg),
        Command::Meanfield(a) => commands::meanfield(a, &cfg),
        Command::Nash(a) => commands::nash(a, &cfg),
        Command::Reproduce(a) => reproduce::reproduce(a, &cfg),
    })
}

/// Runs a command end to end and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let run = execute(cli)?;
    output::write_all(&run.out, run.command, &run.parameters, &run.outputs)?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for line in &run.outputs.messages {
        let _ = writeln!(lock, "{line}");
    }
    match &run.outputs.numeric_failure {
        Some(msg) => {
            eprintln!("error: numeric failure: {msg}");
            Ok(EXIT_NUMERIC)
        }
        None => Ok(0),
    }
}
