//! `covid-rd`: batch front end for simulations, verification studies and
//! comparisons against observed data.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 invalid input,
//! 3 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "COVID_RD_THREADS";

#[derive(Debug, Parser)]
#[command(name = "covid-rd", version, about = "Seven-compartment epidemic reaction-diffusion solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IntegratorArg {
    Rk4,
    Euler,
    Imex,
}

impl From<IntegratorArg> for covid_rd::Integrator {
    fn from(v: IntegratorArg) -> Self {
        match v {
            IntegratorArg::Rk4 => covid_rd::Integrator::Rk4,
            IntegratorArg::Euler => covid_rd::Integrator::Euler,
            IntegratorArg::Imex => covid_rd::Integrator::Imex,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AxisArg {
    /// RK4 or Euler on the diffusion-free problem against a fine-step reference
    Temporal,
    /// Cosine mode under frozen-N diffusion against the exact decay
    Spatial,
    /// IMEX Euler against a fine-step RK4 reference
    Imex,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write time-series CSVs and a run manifest
    Simulate {
        /// Scenario JSON file, or preset:NAME
        #[arg(long, value_name = "FILE|preset:NAME")]
        scenario: String,
        /// Override the time step (days)
        #[arg(long, allow_negative_numbers = true)]
        dt: Option<f64>,
        /// Override the horizon (days)
        #[arg(long = "T", value_name = "DAYS", allow_negative_numbers = true)]
        horizon: Option<f64>,
        /// Override the integrator
        #[arg(long, value_enum)]
        integrator: Option<IntegratorArg>,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Refuse to run when dt violates a stability guard
        #[arg(long)]
        strict_guards: bool,
        /// Also write a gnuplot script for the regional D curves
        #[arg(long)]
        gnuplot: bool,
    },
    /// Run a convergence study and report observed orders
    OrderCheck {
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Number of refinement levels (at least 3)
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// Integrator for the temporal axis
        #[arg(long, value_enum, default_value = "rk4")]
        integrator: IntegratorArg,
        /// Write the JSON report here instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run at a multiple of the largest guarded step and monitor the L2 norm
    StabilityCheck {
        /// Scenario JSON file, or preset:NAME
        #[arg(long, value_name = "FILE|preset:NAME")]
        scenario: String,
        /// dt as a multiple of the combined stability bound
        #[arg(long, default_value_t = 0.5)]
        dt_factor: f64,
        /// Write the JSON report here instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a simulated run with observed hospitalization counts
    Compare {
        /// Scenario JSON file, or preset:NAME
        #[arg(long, value_name = "FILE|preset:NAME")]
        scenario: String,
        /// Observed CSV: day,region,confirmed_hospitalized[,recovered,deaths]
        #[arg(long)]
        observed: PathBuf,
        /// Region mapping OBS=SIM[,OBS=SIM...]; defaults to matching names
        #[arg(long, value_name = "MAP")]
        region: Option<String>,
        /// Write the JSON metrics here instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the shipped presets
    Presets,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<covid_rd::Error> for Failure {
    fn from(e: covid_rd::Error) -> Self {
        use covid_rd::Error as E;
        let code = match &e {
            E::NumericalAbort { .. } | E::NonFinite { .. } => EXIT_NUMERICAL,
            E::Io(_) => EXIT_USAGE,
            E::ShapeMismatch { .. }
            | E::InvalidParameter { .. }
            | E::Unsupported(_)
            | E::GuardViolation { .. }
            | E::Validation(_)
            | E::Degenerate(_)
            | E::Parse { .. }
            | E::Json(_) => EXIT_VALIDATION,
        };
        let message = match &e {
            E::Validation(diags) => {
                let mut m = String::from("invalid scenario:");
                for d in diags {
                    m.push_str(&format!("\n  {}: {}", d.field, d.message));
                }
                m
            }
            other => other.to_string(),
        };
        Self { code, message }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(format!("cannot configure thread pool: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Simulate { scenario, dt, horizon, integrator, out, strict_guards, gnuplot } => {
            commands::simulate(commands::SimulateArgs {
                scenario,
                dt,
                horizon,
                integrator: integrator.map(Into::into),
                out,
                strict_guards,
                gnuplot,
            })
        }
        Command::OrderCheck { axis, levels, integrator, out } => {
            let axis = match axis {
                AxisArg::Temporal => commands::StudyAxis::Temporal(integrator.into()),
                AxisArg::Spatial => commands::StudyAxis::Spatial,
                AxisArg::Imex => commands::StudyAxis::Imex,
            };
            commands::order_check(axis, levels, out.as_deref())
        }
        Command::StabilityCheck { scenario, dt_factor, out } => {
            commands::stability_check_cmd(&scenario, dt_factor, out.as_deref())
        }
        Command::Compare { scenario, observed, region, out } => {
            commands::compare(&scenario, &observed, region.as_deref(), out.as_deref())
        }
        Command::Presets => commands::presets(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
