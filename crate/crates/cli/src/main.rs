//! `strata`: command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 regime guard.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

mod analyze;
mod doc;
mod evolve;
mod format;
mod region;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("regime guard: {0}")]
    Guard(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Guard(_) => 3,
            CliError::Input(_) | CliError::Io { .. } => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "strata",
    version,
    about = "Hyperbolicity and eigenstructure of two-layer shallow-water states"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Input document (`-` for stdin).
    #[arg(long, global = true, default_value = "-")]
    input: String,
    /// Output file (`-` for stdout).
    #[arg(long, global = true, default_value = "-")]
    output: String,
    /// Relative width of the boundary band for tri-state verdicts.
    #[arg(long, global = true, default_value_t = strata::DEFAULT_TOL)]
    tol: f64,
    /// Number of directions `theta_j = j pi / n` to sample.
    #[arg(long, global = true)]
    theta_samples: Option<usize>,
    /// Refuse degenerate states (exit 3).
    #[arg(long, global = true)]
    strict: bool,
    /// Let `evolve` run on backgrounds that are not 2D hyperbolic.
    #[arg(long, global = true)]
    allow_illposed: bool,
    /// Worker threads for grid evaluation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify a state: hyperbolicity, symmetrizability, spectrum, fields.
    Analyze,
    /// Scan a two-parameter grid and write one CSV row per point.
    RegionMap,
    /// Dump eigenvalues and closed-form eigenvectors.
    Eigen,
    /// Compare the weak-stratification expansions with exact values.
    Expansions,
    /// Run the frozen-coefficient linear evolution.
    Evolve(EvolveArgs),
}

#[derive(Debug, Args)]
struct EvolveArgs {
    /// Grid points per side (power of two).
    #[arg(long, default_value_t = 32)]
    grid: usize,
    /// Side of the periodic square.
    #[arg(long, default_value_t = std::f64::consts::TAU)]
    length: f64,
    /// Final time in characteristic times `L / sqrt(g (h1 + h2))`.
    #[arg(long, default_value_t = 10.0)]
    time: f64,
    /// Number of history intervals.
    #[arg(long, default_value_t = 40)]
    steps: usize,
    /// Largest excited wavenumber index.
    #[arg(long, default_value_t = 2)]
    kmax: i32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the final field as JSON.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

fn read_input(path: &str) -> Result<String, CliError> {
    let mut text = String::new();
    let res = if path == "-" {
        std::io::stdin().read_to_string(&mut text).map(|_| ())
    } else {
        std::fs::read_to_string(path).map(|t| text = t)
    };
    res.map_err(|source| CliError::Io {
        path: path.to_string(),
        source,
    })?;
    Ok(text)
}

fn write_output(path: &str, text: &str) -> Result<(), CliError> {
    let res = if path == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(text.as_bytes()).and_then(|_| out.flush())
    } else {
        std::fs::write(path, text)
    };
    res.map_err(|source| CliError::Io {
        path: path.to_string(),
        source,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let c = &cli.common;
    if !(c.tol.is_finite() && c.tol >= 0.0) {
        return Err(CliError::Input(format!(
            "--tol must be finite and >= 0, got {}",
            c.tol
        )));
    }
    if c.theta_samples == Some(0) {
        return Err(CliError::Input("--theta-samples must be >= 1".into()));
    }
    if let Some(n) = c.jobs {
        if n == 0 {
            return Err(CliError::Input("--jobs must be >= 1".into()));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let text = read_input(&c.input)?;
    let out = match &cli.command {
        Command::Analyze => {
            let d = doc::StateDocument::parse(&text)?;
            analyze::analyze(&d, c.tol, c.theta_samples.unwrap_or(8), c.strict)?
        }
        Command::Eigen => {
            let d = doc::StateDocument::parse(&text)?;
            analyze::eigen(&d, c.theta_samples.unwrap_or(1), c.strict)?
        }
        Command::RegionMap => region::region_map(&doc::RegionMapSpec::parse(&text)?, c.tol)?,
        Command::Expansions => region::expansions(&doc::ExpansionsSpec::parse(&text)?)?,
        Command::Evolve(a) => {
            let d = doc::StateDocument::parse(&text)?;
            let opts = evolve::EvolveOptions {
                grid: a.grid,
                length: a.length,
                time: a.time,
                steps: a.steps,
                kmax: a.kmax,
                seed: a.seed,
                tol: c.tol,
                allow_illposed: c.allow_illposed,
            };
            let res = evolve::evolve(&d, &opts)?;
            if let Some(path) = &a.snapshot {
                std::fs::write(path, &res.snapshot).map_err(|source| CliError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
            res.history
        }
    };
    write_output(&c.output, &out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("strata: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
