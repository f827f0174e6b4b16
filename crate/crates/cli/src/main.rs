//! `dualloop` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "dualloop", version, about = "Dual-loop crosstalk cancellation simulator")]
struct Cli {
    /// Print summaries (-v) and per-stage detail (-vv).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "DUALLOOP_OUT", default_value = "results")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// |B|² of the single and solved dual loop on a square grid in the qubit plane.
    FieldMap {
        #[command(flatten)]
        common: Common,
        /// Half width of the grid (µm).
        #[arg(long, default_value_t = 100.0)]
        half_width_um: f64,
        /// Grid points per side.
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Field phasors along the site row.
    LineScan {
        #[command(flatten)]
        common: Common,
        /// Scan the inner loop alone instead of the solved pair.
        #[arg(long)]
        single: bool,
    },
    /// Solve the outer-loop drive that nulls Bz at the neighbour site.
    CancelSolve {
        #[command(flatten)]
        common: Common,
    },
    /// Null position against outer amplitude.
    RatioSweep {
        #[command(flatten)]
        common: Common,
    },
    /// Local and neighbour power against outer phase.
    PhaseSweep {
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo Rabi trace and decay fit.
    Rabi {
        #[command(flatten)]
        common: Common,
        /// Random-phase crosstalk amplitude, e.g. "0.6 MHz".
        #[arg(long, conflicts_with = "calibrate")]
        noise: Option<String>,
        /// Calibrate the crosstalk amplitude to the config's noisy_target.
        #[arg(long)]
        calibrate: bool,
        /// Power suppression applied to the crosstalk tone.
        #[arg(long, default_value_t = 1.0)]
        suppression: f64,
    },
    /// ODMR spectrum under the drive tone.
    Odmr {
        #[command(flatten)]
        common: Common,
        /// Mean photons per frequency point; noiseless when omitted.
        #[arg(long)]
        photons: Option<f64>,
        /// Add an equal second tone at this phase (degrees).
        #[arg(long)]
        second_tone_phase_deg: Option<f64>,
    },
    /// Run a named scenario.
    Scenario {
        #[command(flatten)]
        common: Common,
        /// Scenario name, run with default settings (instead of --config).
        #[arg(long, conflicts_with = "config")]
        name: Option<String>,
        /// Compare the summary against a reference table.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Compare against the shipped published values, where available.
        #[arg(long, conflicts_with = "reference")]
        published: bool,
    },
    /// Check a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command, cli.verbose) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
