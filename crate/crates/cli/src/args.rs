//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qct_core::linalg::DEFAULT_LINEAR_TOL;

#[derive(Debug, Parser)]
#[command(
    name = "qct",
    version,
    about = "State solves, optimal control solves and convergence tables for -div((1+|y|)∇y) = u"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the state equation for a given control.
    State(StateArgs),
    /// Solve the optimal control problem with the semismooth Newton method.
    Ocp(OcpArgs),
    /// Run the manufactured benchmark for every row of a spec file.
    Table(TableArgs),
    /// Run the verification property suite on a small mesh.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Xyz,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Xyz => "xyz",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Problem {
    /// Grid cells per side (h = 1/nh).
    #[arg(long = "nh", default_value_t = 100)]
    pub n_h: usize,
    /// Control cost.
    #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Support parameter of the manufactured solution, in [0.5, 1].
    #[arg(long, default_value_t = 0.8, allow_negative_numbers = true)]
    pub beta: f64,
}

#[derive(Debug, Clone, Args)]
pub struct StateArgs {
    #[command(flatten)]
    pub problem: Problem,
    /// Control: `zero`, `manufactured`, or an expression in x1, x2.
    #[arg(long = "u", default_value = "zero", allow_hyphen_values = true)]
    pub control: String,
    /// Mollification radius; positive values use the Picard iteration.
    #[arg(long = "eps", default_value_t = 0.0, allow_negative_numbers = true)]
    pub epsilon: f64,
    /// Picard stopping bound on the H¹ seminorm of the update.
    #[arg(long, default_value_t = 1e-10, allow_negative_numbers = true)]
    pub tol: f64,
    /// Picard iteration cap.
    #[arg(long = "max-iter", default_value_t = 100)]
    pub max_iter: usize,
    /// Directory for the field dump and summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Field dump format.
    #[arg(long, value_enum, default_value_t = Format::Xyz)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct OcpArgs {
    #[command(flatten)]
    pub problem: Problem,
    /// Desired state: `manufactured`, `zero`, or an expression in x1, x2.
    #[arg(
        long = "yd",
        default_value = "manufactured",
        allow_hyphen_values = true
    )]
    pub target: String,
    /// Residual tolerance of each Newton system.
    #[arg(long, default_value_t = DEFAULT_LINEAR_TOL, allow_negative_numbers = true)]
    pub tol: f64,
    /// Newton iteration cap.
    #[arg(long = "max-iter", default_value_t = 25)]
    pub max_iter: usize,
    /// Directory for the y, u, w, psi dumps and the report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Field dump format.
    #[arg(long, value_enum, default_value_t = Format::Xyz)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct TableArgs {
    /// File with one `n_h alpha beta` row per line; `#` starts a comment.
    pub spec: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Residual tolerance of each Newton system.
    #[arg(long, allow_negative_numbers = true)]
    pub tol: Option<f64>,
    /// Newton iteration cap.
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// `csv` or `json`.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    /// Grid cells per side, at most 100.
    #[arg(long = "nh", default_value_t = 50)]
    pub n_h: usize,
    #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.8, allow_negative_numbers = true)]
    pub beta: f64,
    /// Random sample points for the manufactured identities.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}
