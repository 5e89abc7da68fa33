//! Command-line front end: synth, train, rank, place and surface.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
pub mod manifest;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "drivadv", version, about = "Environment-debiased driver ranking and placement")]
pub struct Cli {
    /// Log progress to stderr (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fleet with known ground truth.
    Synth(SynthArgs),
    /// Fit normalization and train the baseline and behavior networks.
    Train(TrainArgs),
    /// Rank drivers by mean trip advantage.
    Rank(RankArgs),
    /// Find the advantage-maximizing behavior and the closest driver.
    Place(PlaceArgs),
    /// Evaluate the advantage on a grid over two behavior dims.
    Surface(SurfaceArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub drivers: usize,
    #[arg(long, default_value_t = 100)]
    pub trips: usize,
    #[arg(long, default_value_t = 8)]
    pub env_dims: usize,
    #[arg(long, default_value_t = 6)]
    pub behavior_dims: usize,
    #[arg(long, default_value_t = 0.25)]
    pub skill_spacing: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Odd-indexed drivers only see harder, shifted environments.
    #[arg(long)]
    pub env_shift: bool,
    /// All drivers get the same skill offset.
    #[arg(long)]
    pub equal_skills: bool,
    /// All drivers share the optimal behavior center.
    #[arg(long)]
    pub shared_behavior: bool,
    #[arg(long, default_value_t = 0.0)]
    pub interaction: f64,
    #[arg(long, default_value_t = 0.4)]
    pub behavior_noise: f64,
    #[arg(long, default_value_t = 2.0)]
    pub behavior_radius: f64,
    #[arg(long, default_value_t = 0.15)]
    pub curvature: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Trip CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Schema JSON; defaults to `schema.json` beside the data.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [64, 64, 64])]
    pub hidden: Vec<usize>,
    /// Master seed for both networks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub baseline_seed: Option<u64>,
    #[arg(long)]
    pub behavior_seed: Option<u64>,
    /// Hold out this fraction of trips for validation curves.
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Bundle output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Report advantages in target-metric units instead of normalized ones.
    #[arg(long)]
    pub raw_units: bool,
    /// Warn about drivers with fewer trips than this.
    #[arg(long, default_value_t = 10)]
    pub min_trips: usize,
    /// Ground-truth file; adds a rank correlation against true skills.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Units {
    Raw,
    Normalized,
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Units::Raw => "raw",
            Units::Normalized => "normalized",
        })
    }
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// JSON array with the environment vector.
    #[arg(long)]
    pub env: PathBuf,
    /// Units of the environment and template vectors.
    #[arg(long, value_enum, default_value_t = Units::Raw)]
    pub units: Units,
    /// JSON array of behavior values held fixed; null marks a free dim.
    #[arg(long)]
    pub fix_template: Option<PathBuf>,
    /// Behavior column names to search over.
    #[arg(long, value_delimiter = ',')]
    pub free: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PlaceArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_generations: usize,
    #[arg(long)]
    pub population: Option<usize>,
    /// Allow one restart with a doubled population after stagnation.
    #[arg(long)]
    pub restart: bool,
    #[arg(long, default_value_t = 5)]
    pub runner_ups: usize,
    /// Match the farthest driver instead of the nearest.
    #[arg(long)]
    pub invert_match: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// Grid points per free dim.
    #[arg(long, default_value_t = 50)]
    pub resolution: usize,
    #[arg(long)]
    pub raw_units: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// A failed command with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<drivadv::Error> for Failure {
    fn from(e: drivadv::Error) -> Self {
        Failure {
            code: if e.is_usage() { EXIT_USAGE } else { EXIT_RUNTIME },
            message: e.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn execute(cli: &Cli, argv: &[String]) -> Result<(), Failure> {
    match &cli.command {
        Command::Synth(a) => commands::synth(a, argv),
        Command::Train(a) => commands::train(a, argv),
        Command::Rank(a) => commands::rank(a, argv),
        Command::Place(a) => commands::place(a, argv),
        Command::Surface(a) => commands::surface(a, argv),
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &argv) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}
