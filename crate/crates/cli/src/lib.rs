//! Command-line driver: runs the continuation pipeline from a JSON or flag
//! configuration and writes CSV, JSON and SVG artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{Outcome, Status};
pub use config::{Overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "bifloop",
    version,
    about = "Bifurcation diagrams of a convection-diffusion problem with a degenerate eigenvalue"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep d and record the bifurcation values from u = 0
    Spectrum(Overrides),
    /// Trace, classify and validate the full diagram
    Diagram(Overrides),
    /// Re-run the validators on a stored branches.csv
    Validate {
        #[command(flatten)]
        overrides: Overrides,
        /// Branch table to check, defaults to <out>/branches.csv
        #[arg(long, value_name = "PATH")]
        branches: Option<PathBuf>,
    },
    /// Fit resolvent growth exponents and run the pencil checks
    Multiplicity(Overrides),
}

impl Command {
    fn overrides(&self) -> &Overrides {
        match self {
            Command::Spectrum(o) | Command::Diagram(o) | Command::Multiplicity(o) => o,
            Command::Validate { overrides, .. } => overrides,
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let rc = RunConfig::resolve(cli.command.overrides())?;
    match &cli.command {
        Command::Spectrum(_) => commands::cmd_spectrum(&rc),
        Command::Diagram(_) => commands::cmd_diagram(&rc),
        Command::Validate { branches, .. } => commands::cmd_validate(&rc, branches.as_deref()),
        Command::Multiplicity(_) => commands::cmd_multiplicity(&rc),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(out) => {
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            for n in &out.notes {
                eprintln!("{n}");
            }
            out.status.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
