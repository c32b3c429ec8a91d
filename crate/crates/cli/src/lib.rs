//! Command-line front end: dataset generation, predictor training and
//! evaluation, solving, benchmarking and walk-on-spheres verification.

pub mod bench;
mod commands;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

pub use commands::record_for_instance;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::Io(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<fexkit::pde::PdeError> for CliError {
    fn from(e: fexkit::pde::PdeError) -> Self {
        use fexkit::pde::PdeError as E;
        match e {
            E::Io(_) => CliError::Io(e.to_string()),
            E::Eval(_) | E::DegenerateReference => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<fexkit::datagen::DatagenError> for CliError {
    fn from(e: fexkit::datagen::DatagenError) -> Self {
        use fexkit::datagen::DatagenError as E;
        match e {
            E::Io(_) => CliError::Io(e.to_string()),
            E::GenerationFailure { .. } => CliError::Numerical(e.to_string()),
            E::Parse { .. } => CliError::Config(e.to_string()),
        }
    }
}

impl From<fexkit::predictor::PredictorError> for CliError {
    fn from(e: fexkit::predictor::PredictorError) -> Self {
        use fexkit::predictor::PredictorError as E;
        match e {
            E::Io(_) => CliError::Io(e.to_string()),
            E::EmptyTrainingSet => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<fexkit::fex::FexError> for CliError {
    fn from(e: fexkit::fex::FexError) -> Self {
        match e {
            fexkit::fex::FexError::EmptySearchSpace(_) => CliError::Numerical(e.to_string()),
            fexkit::fex::FexError::Pde(p) => p.into(),
        }
    }
}

impl From<fexkit::wos::WosError> for CliError {
    fn from(e: fexkit::wos::WosError) -> Self {
        match e {
            fexkit::wos::WosError::Eval(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<fexkit::ExprError> for CliError {
    fn from(e: fexkit::ExprError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "fexkit", version, about = "Operator-informed symbolic PDE solving")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Main output file; most commands print to stdout without it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Log progress to stderr (`-vv` for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a JSONL dataset of manufactured problems.
    GenData(GenDataArgs),
    /// Fit the bag-of-tokens operator predictor.
    TrainPredictor(TrainArgs),
    /// Score a predictor on a dataset (per-operator CSV).
    EvalPredictor(EvalArgs),
    /// Search for a closed-form solution of one instance.
    Solve(SolveArgs),
    /// Informed versus uninformed benchmark.
    Bench(BenchArgs),
    /// Check a candidate against walk-on-spheres estimates.
    Oracle(OracleArgs),
    /// Write a manufactured instance file from a solution in postfix form.
    MakeInstance(MakeInstanceArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    /// Comma separated `pde:bc` pairs, e.g. `poisson:dirichlet`. All six by default.
    #[arg(long)]
    pub types: Option<String>,
    /// Put the boundary data into the prompt as well.
    #[arg(long)]
    pub include_bc: bool,
    #[arg(long, default_value_t = 100)]
    pub max_attempts: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    /// Minibatch size; full batch when omitted.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `oracle`, a trained model (`.json`) or external predictions (`.jsonl`).
    #[arg(long, default_value = "oracle")]
    pub model: String,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// `oracle`, a trained model (`.json`) or external predictions (`.jsonl`).
    /// Uninformed search when omitted.
    #[arg(long)]
    pub ops_from: Option<String>,
    /// Record seed used to look up external predictions.
    #[arg(long, default_value_t = 0)]
    pub record_seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 60)]
    pub inner_steps: usize,
    #[arg(long, default_value_t = 600)]
    pub fine_tune_steps: usize,
    #[arg(long, default_value_t = 0.999)]
    pub reward_threshold: f64,
    #[arg(long, default_value_t = 4096)]
    pub n_interior: usize,
    #[arg(long, default_value_t = 1024)]
    pub n_boundary: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// JSON list of benchmark instances; the built-in ten when omitted.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// Use only the first N instances.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 128)]
    pub n_interior: usize,
    #[arg(long, default_value_t = 64)]
    pub n_boundary: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Where to write the summary JSON; printed to stdout otherwise.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Per-run CSV (one line per instance, repeat and mode).
    #[arg(long)]
    pub runs: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// CSV of points, one per row; random interior points when omitted.
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub n_points: usize,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub eps_shell: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_steps: usize,
    /// Candidate solution in postfix form; the instance's true solution when omitted.
    #[arg(long)]
    pub candidate: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MakeInstanceArgs {
    /// Solution in postfix form, e.g. `x3 SIN 16 *`.
    #[arg(long)]
    pub u: String,
    #[arg(long, default_value = "poisson")]
    pub pde: String,
    #[arg(long, default_value = "dirichlet")]
    pub bc: String,
    #[arg(long, default_value = "unit_box")]
    pub domain: String,
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
}

/// Parses arguments and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return 2;
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
