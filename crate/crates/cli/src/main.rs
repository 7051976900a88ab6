use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cfl_cli::commands::{cmd_estimate, cmd_oracle, cmd_solve, cmd_sweep, parse_values, SweepAxis};
use cfl_cli::CliError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cfl", version, about = "Carleman-Fourier linearization solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select parameters, solve, and compare against the reference integrator.
    Solve {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Comma-separated `N=..,k=..,m=..,nu=..`.
        #[arg(long)]
        param_overrides: Option<String>,
    },
    /// Re-run the pipeline over a list of values for one parameter.
    Sweep {
        config: PathBuf,
        /// One of N, k, r, nu, epsilon.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Output CSV; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameters and query counts for both regimes.
    Estimate {
        config: PathBuf,
        #[arg(long)]
        improved_encoding: bool,
        /// Output JSON; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the reference trajectory.
    Oracle {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Solve {
            config,
            out,
            param_overrides,
        } => {
            let manifest = cmd_solve(&config, &out, param_overrides.as_deref())?;
            println!(
                "{} regime: estimate {:.12e}{:+.12e}i, |error| {:.3e} (epsilon {:.1e}); wrote {}",
                manifest.regime,
                manifest.estimate.re,
                manifest.estimate.im,
                manifest.measured_errors.total,
                manifest.params.epsilon,
                out.display()
            );
            Ok(0)
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let axis: SweepAxis = axis.parse()?;
            let csv = cmd_sweep(&config, axis, &parse_values(&values))?;
            emit(&csv, out.as_deref())?;
            Ok(0)
        }
        Command::Estimate {
            config,
            improved_encoding,
            out,
        } => {
            let (report, any_ok) = cmd_estimate(&config, improved_encoding)?;
            let text =
                serde_json::to_string_pretty(&report).map_err(|e| CliError::config(format!("json: {e}")))?;
            emit(&(text + "\n"), out.as_deref())?;
            Ok(if any_ok { 0 } else { 3 })
        }
        Command::Oracle { config, out } => {
            let path = cmd_oracle(&config, &out)?;
            println!("wrote {}", path.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
