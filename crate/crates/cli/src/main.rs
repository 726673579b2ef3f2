//! Command-line front end: reproduces the phase-space, semi-classical, and
//! ensemble experiments as CSV/JSON artifacts.
//!
//! Exit codes: 0 success, 1 numeric failure, 2 usage error.

mod runs;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "qevolve",
    version,
    about = "Classical vs quantum evolution experiments: Kerr phase-space panels, \
             semi-classical Jaynes-Cummings trajectories, separable oscillator ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render one Kerr comparison panel (Wigner grid + mean trajectory).
    Kerr(KerrArgs),
    /// Jaynes-Cummings trajectories: numeric, analytic, or exact quantum.
    Jc(JcArgs),
    /// K-separable variance sweep of a coupled oscillator ensemble.
    Ensemble(EnsembleArgs),
    /// Generic engine check: Schroedinger recovery on a random Hermitian
    /// operator.
    Engine(EngineArgs),
}

#[derive(clap::Args)]
pub struct KerrArgs {
    /// Panel label: first letter is the initial state (c = coherent,
    /// q = cat), second the dynamics (c = classical, q = quantum).
    #[arg(long)]
    pub mode: String,
    /// Coherent initial amplitude, e.g. "3" or "1.5-0.5i".
    #[arg(long, default_value = "3")]
    pub alpha0: String,
    /// First cat branch; defaults to 3 e^{-i pi/4}.
    #[arg(long)]
    pub cat_alpha1: Option<String>,
    /// Second cat branch; defaults to 3 e^{+i pi/4}.
    #[arg(long)]
    pub cat_alpha2: Option<String>,
    /// Relative sign between the cat branches (+1 or -1).
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub cat_sign: f64,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 0.1)]
    pub kappa: f64,
    /// Final time in units of 1/kappa (t = value/kappa); default pi.
    #[arg(long, default_value_t = std::f64::consts::PI)]
    pub t_over_kappa: f64,
    /// Absolute final time; overrides --t-over-kappa (required if kappa = 0).
    #[arg(long)]
    pub time: Option<f64>,
    #[arg(long, default_value_t = -6.0, allow_hyphen_values = true)]
    pub grid_min: f64,
    #[arg(long, default_value_t = 6.0)]
    pub grid_max: f64,
    #[arg(long, default_value_t = 301)]
    pub grid_points: usize,
    /// Photon-number cutoff for the quantum panels.
    #[arg(long, default_value_t = 60)]
    pub cutoff: usize,
    #[arg(long, default_value_t = 256)]
    pub traj_samples: usize,
    /// Evaluate in the lab frame instead of countering the free rotation.
    #[arg(long)]
    pub lab_frame: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(clap::Args)]
pub struct JcArgs {
    /// Solver: numeric (engine integration), analytic (elliptic closed
    /// form), or quantum (exact entangled solution).
    #[arg(long, default_value = "numeric")]
    pub solver: String,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 10.0)]
    pub omega: f64,
    /// Trajectory horizon; defaults to 10/kappa.
    #[arg(long)]
    pub t: Option<f64>,
    /// Sampling step; defaults to t/1000.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Also compute the other route and report the maximum
    /// numeric-vs-analytic deviation.
    #[arg(long)]
    pub compare: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(clap::Args)]
pub struct EnsembleArgs {
    /// Total number of oscillators.
    #[arg(long = "N")]
    pub n: usize,
    /// Partition counts: comma list with optional ranges, e.g.
    /// "2,3,...,10" or "2..10".
    #[arg(long = "K")]
    pub k: String,
    /// Dimensionless coupling R = kappa/(m omega^2).
    #[arg(long = "R", default_value_t = 1e-6)]
    pub r: f64,
    /// Inverse temperature beta = hbar omega/(k_B T); the ratio curves do
    /// not depend on it.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 4.0)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 801)]
    pub tau_steps: usize,
    /// Cross-check the structured propagation against the dense matrix-ODE
    /// oracle (N <= 256) and report the max elementwise deviation.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(clap::Args)]
pub struct EngineArgs {
    /// State-space dimension of the random Hermitian operator.
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    /// Seed for the randomized probe.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Failure classes mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    fn numeric(msg: impl std::fmt::Display) -> Self {
        Self::Numeric(msg.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Numeric(format!("i/o failure: {e}"))
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Kerr(args) => runs::run_kerr(&args),
        Command::Jc(args) => runs::run_jc(&args),
        Command::Ensemble(args) => runs::run_ensemble(&args),
        Command::Engine(args) => runs::run_engine(&args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}
