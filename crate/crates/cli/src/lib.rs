//! Library side of the `async-lab` command: scenario files, command
//! implementations and exit-code mapping.
//!
//! Exit codes: 0 success, 2 invalid input or solver failure, 3 infeasible
//! bound, 4 runtime failure, 5 golden mismatch.

pub mod bound;
pub mod reproduce;
pub mod run;
pub mod scenario;

use std::path::PathBuf;

use async_lab::sim::DEFAULT_CONSENSUS_TOL;
use clap::{Parser, Subcommand};

use bound::Theorem;
use scenario::ScenarioFile;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Infeasible(String),
    Runtime(String),
    Golden(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Runtime(_) => 4,
            CliError::Golden(_) => 5,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "invalid input: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Golden(m) => write!(f, "golden check failed: {m}"),
        }
    }
}

impl From<async_lab::Error> for CliError {
    fn from(e: async_lab::Error) -> Self {
        use async_lab::Error as E;
        match e {
            E::Schedule(_) | E::TraceOverflow(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "async-lab", version, about = "Asynchronously sampled multi-agent LTI networks")]
pub struct Cli {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative consensus tolerance: consensus means δᵀδ < tol·(1 + δ(0)ᵀδ(0)) over the last time unit.
    #[arg(long, global = true, default_value_t = DEFAULT_CONSENSUS_TOL)]
    tol: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Solve the Riccati design in the file and print P, K and the residual.
    Design { file: PathBuf },
    /// Print a stability budget (or error bound) report.
    Bound {
        file: PathBuf,
        #[arg(long, value_enum)]
        theorem: Theorem,
    },
    /// Simulate the scenario and write trace.csv, events.json and report.json.
    Run {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a built-in example and compare its constants against the published values.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        example: u8,
        /// Also write the run outputs here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_json(v: &impl serde::Serialize) -> Result<(), CliError> {
    use std::io::Write;
    let s = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let _ = writeln!(std::io::stdout().lock(), "{s}");
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    if !(cli.tol > 0.0 && cli.tol.is_finite()) {
        return Err(CliError::Input(format!("--tol {} must be positive", cli.tol)));
    }
    let load = |file: &PathBuf| -> Result<ScenarioFile, CliError> {
        let mut f = ScenarioFile::load(file)?;
        if let Some(seed) = cli.seed {
            f.seed = seed;
        }
        Ok(f)
    };
    match &cli.command {
        Command::Design { file } => print_json(&load(file)?.gain_design()?),
        Command::Bound { file, theorem } => {
            let report = bound::compute(&load(file)?, *theorem)?;
            print_json(&report)?;
            if report.feasible {
                Ok(())
            } else {
                Err(CliError::Infeasible(report.diagnostics))
            }
        }
        Command::Run { file, out } => {
            let report = run::execute(&load(file)?, out, cli.tol)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&report)
        }
        Command::Reproduce { example, out } => {
            reproduce::execute(*example, cli.seed.unwrap_or(0), cli.tol, out.as_deref())
        }
    }
}
