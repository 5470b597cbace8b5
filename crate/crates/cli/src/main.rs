//! `asysg`: run asynchronous SG experiments from JSON configs.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "asysg",
    version,
    about = "Asynchronous parallel stochastic gradient experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write one trace CSV per replicate seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// `section.key=value`, applied before validation. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Trace path, replacing `output.trace`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replicate count, replacing `seeds.count`.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Print step sizes, thresholds, conditions and bounds as JSON.
    Theory {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare parallel traces against a baseline at gradsq ≤ epsilon.
    Speedup {
        #[arg(long)]
        baseline: PathBuf,
        /// `WORKERS=PATH`. Repeatable.
        #[arg(long, value_name = "WORKERS=PATH", required = true)]
        parallel: Vec<String>,
        #[arg(long)]
        epsilon: f64,
    },
    /// Split a trace CSV into two-column plot files.
    Plotdata {
        trace: PathBuf,
        /// Output directory; defaults to the trace's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            overrides,
            out,
            seeds,
        } => commands::run(&config, &overrides, out, seeds),
        Command::Theory { config, overrides } => commands::theory(&config, &overrides),
        Command::Speedup {
            baseline,
            parallel,
            epsilon,
        } => commands::speedup(&baseline, &parallel, epsilon),
        Command::Plotdata { trace, out } => commands::plotdata(&trace, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("asysg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
