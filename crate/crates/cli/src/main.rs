mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};

use crate::commands::{BenchArgs, SolveArgs};
use crate::config::RunConfig;

/// Fast boundary element solver for the wave equation: hierarchical
/// compression across convolution quadrature frequencies and time stepping.
#[derive(Parser)]
#[command(name = "cqbem", version)]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress the single layer tensor and report metrics as JSON.
    Compress {
        #[command(flatten)]
        config: RunConfig,
        /// Also write the compressed factors to this file.
        #[arg(long)]
        dump: Option<std::path::PathBuf>,
    },
    /// Solve the Dirichlet problem for a spherical wave.
    Solve(SolveArgs),
    /// Run a parameter sweep and write one CSV row per configuration.
    Bench(BenchArgs),
}

impl Command {
    fn config(&self) -> &RunConfig {
        match self {
            Command::Compress { config, .. } => config,
            Command::Solve(a) => &a.config,
            Command::Bench(a) => &a.config,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = cli.command.config().validate() {
        Cli::command().error(ErrorKind::ValueValidation, msg).exit();
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            Cli::command().error(ErrorKind::ValueValidation, "--threads must be at least 1").exit();
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Compress { config, dump } => commands::compress(config, dump.as_deref()),
        Command::Solve(args) => commands::solve(args),
        Command::Bench(args) => commands::bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
