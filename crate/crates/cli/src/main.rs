//! equizero: build bases, run the experiments, and write CSV/JSON artifacts.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use equizero::Error;

#[derive(Parser)]
#[command(name = "equizero", version, about = "Chebyshev bases and zero statistics of random polynomials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a basis and its Chebyshev-constant report.
    Basis(Common),
    /// Sample (1/2n) log Γ_n against V_K on a grid.
    Green(Common),
    /// Expected zero distribution experiment.
    Expect(Common),
    /// Variance bound experiment.
    Variance(Common),
    /// Single-sequence equidistribution experiment.
    Sequence(Common),
    /// Log-moment constants of a coefficient measure.
    Moment(Common),
}

#[derive(Args, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

/// An error with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    pub fn solver(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }

    pub fn experiment(message: impl Into<String>) -> Self {
        Failure {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::InvalidInput(_) | Error::Unsupported(_) | Error::Overflow { .. } | Error::DegenerateDirection | Error::Json(_) => {
                Failure::config(message)
            }
            Error::NonConvergence { .. } | Error::RankDeficient(_) | Error::EigenFailure(_) => Failure::solver(message),
            Error::Io(_) => Failure::missing(message),
            _ => Failure::experiment(message),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, common) = match &cli.command {
        Command::Basis(c) => ("basis", c),
        Command::Green(c) => ("green", c),
        Command::Expect(c) => ("expect", c),
        Command::Variance(c) => ("variance", c),
        Command::Sequence(c) => ("sequence", c),
        Command::Moment(c) => ("moment", c),
    };
    if let Some(t) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(name, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
