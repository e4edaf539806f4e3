//! `difftraj` command-line front end.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use difftraj::Error;

#[derive(Parser)]
#[command(name = "difftraj", version, about = "Diffusive quantum trajectories of two decaying qubits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// Preset (fig1-dashed, fig1-solid, bell) or 8 reals re/im of ψ00, ψ01, ψ10, ψ11.
    #[arg(long, allow_hyphen_values = true)]
    pub state: Option<String>,
    /// Decay rate γ [default: 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Time step [default: 1e-3/γ].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final time [default: 7/γ].
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// optimal, zero or custom [default: optimal].
    #[arg(long)]
    pub unraveling: Option<String>,
    /// Custom correlation matrix as re u11, im u11, re u12, im u12, re u22, im u22.
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<String>,
    /// exponential or euler [default: exponential].
    #[arg(long)]
    pub scheme: Option<String>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output file; stdout when absent. A manifest is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Single trajectory: c, θ and stored states over time.
    Trajectory {
        #[command(flatten)]
        common: CommonArgs,
        /// Include the record increments Y·dt.
        #[arg(long)]
        records: bool,
        /// Store amplitudes every this many steps [default: 10].
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Ensemble statistics with a JSON pass/fail summary.
    Ensemble {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        ens: EnsembleArgs,
        /// Run an optimality scan over this many phases instead.
        #[arg(long)]
        scan_phases: Option<usize>,
    },
    /// Master-equation Λ(t) and Wootters concurrence.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of output times [default: 701].
        #[arg(long)]
        points: Option<usize>,
    },
    /// Simulated homodyne record under the optimal unraveling.
    Records {
        #[command(flatten)]
        common: CommonArgs,
        /// Unraveling phase [default: θ_opt of the state].
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<f64>,
        /// Also write the generating trajectory here.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Rebuild a trajectory from a record file.
    Replay {
        #[command(flatten)]
        common: CommonArgs,
        /// Record CSV written by `records`.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Trajectory CSV to compare against.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Time-integrated mean concurrence over a ring of unraveling phases.
    Scan {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        ens: EnsembleArgs,
        /// Number of phases [default: 8].
        #[arg(long)]
        phases: Option<usize>,
    },
}

#[derive(Args, Clone, Debug, Default)]
pub struct EnsembleArgs {
    /// Trajectories [default: 500].
    #[arg(long)]
    pub n: Option<usize>,
    /// Output times, uniform in p [default: 50].
    #[arg(long)]
    pub points: Option<usize>,
    /// Comma-separated times for mean-state checkpoints [default: 0.5,1,2 /γ].
    #[arg(long)]
    pub checkpoints: Option<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_)
        | Error::NotSymmetric
        | Error::UnphysicalCorrelation { .. }
        | Error::InvalidCorrelation { .. }
        | Error::OptimalPhaseUndefined { .. }
        | Error::DegenerateState
        | Error::Parse { .. } => 2,
        Error::StepDiverged { .. } | Error::IntegrationDiverged { .. } | Error::TrajectoryFailed { .. } => 3,
        Error::RecordMismatch(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Trajectory {
            common,
            records,
            stride,
        } => commands::trajectory(&common, records, stride),
        Command::Ensemble {
            common,
            ens,
            scan_phases,
        } => commands::ensemble(&common, &ens, scan_phases),
        Command::Oracle { common, points } => commands::oracle(&common, points),
        Command::Records {
            common,
            theta,
            trajectory,
            stride,
        } => commands::records(&common, theta, trajectory.as_deref(), stride),
        Command::Replay {
            common,
            record,
            reference,
            stride,
        } => commands::replay(&common, record.as_deref(), reference.as_deref(), stride),
        Command::Scan { common, ens, phases } => commands::scan(&common, &ens, phases),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
