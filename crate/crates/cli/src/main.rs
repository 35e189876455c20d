//! `psd`: generate data, train, sample, evaluate and benchmark point set
//! diffusion models from the shell.

mod commands;
mod error;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(
    name = "psd",
    version,
    about = "Point set diffusion: train, sample, evaluate"
)]
struct Cli {
    /// Worker threads for training, sampling and metrics (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a synthetic dataset.
    Datagen(DatagenArgs),
    /// Train a denoiser with early stopping.
    Train(TrainArgs),
    /// Draw samples, unconditionally or conditioned on known points in a mask.
    Sample(SampleArgs),
    /// Conditional sampling with everything before a split on the ordered axis known.
    Forecast(ForecastArgs),
    /// Compare generated sets to a reference dataset.
    Evaluate(EvaluateArgs),
    /// Median sampling wall clock against expected set size.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug)]
pub struct DatagenArgs {
    /// homogeneous_poisson, inhomogeneous_poisson, hawkes_st or pinwheel_hawkes.
    #[arg(long, required_unless_present = "spec")]
    pub kind: Option<String>,
    /// Full generator description as JSON; replaces --kind and its flags.
    #[arg(long, conflicts_with = "kind")]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub num: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lower domain corner, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lower: Option<Vec<f64>>,
    /// Upper domain corner, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub upper: Option<Vec<f64>>,
    #[arg(long)]
    pub ordered_axis: Option<usize>,
    /// Intensity of the homogeneous process.
    #[arg(long, default_value_t = 20.0)]
    pub rate: f64,
    /// Expected count of the three-cluster inhomogeneous process.
    #[arg(long, default_value_t = 20.0)]
    pub expected: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub spatial_width: f64,
    #[arg(long, default_value_t = 5)]
    pub arms: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// `key = value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set steps=8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs_max: Option<usize>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// History CSV (default: `<out>.history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Print one line per epoch to stderr.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub num: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON list of {"lower": [...], "upper": [...]} boxes marking the known region.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Dataset of known points; record i conditions sample i (cycling).
    #[arg(long, requires = "mask")]
    pub known: Option<PathBuf>,
    /// Drop known points outside the mask instead of failing.
    #[arg(long, requires = "known")]
    pub clip_known: bool,
    /// Also write an SVG scatter of the first 16 samples.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ForecastArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Full records; the part of record i up to the split conditions sample i
    /// (cycling).
    #[arg(long)]
    pub known: PathBuf,
    /// Points with ordered coordinate up to this value are known.
    #[arg(long, allow_hyphen_values = true)]
    pub split: f64,
    #[arg(long, default_value_t = 1)]
    pub num: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Generate samples from this model.
    #[arg(long, required_unless_present = "samples", conflicts_with = "samples")]
    pub model: Option<PathBuf>,
    /// Use these generated sets.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Reference dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated subset of sl, mae, cd, wd, mmd_wd, mmd_cd.
    #[arg(long, value_delimiter = ',', default_value = "sl,mmd_wd")]
    pub metrics: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of model samples (default: size of the reference dataset).
    #[arg(long)]
    pub num: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ground metric for Wasserstein distances: l1 or l2.
    #[arg(long, default_value = "l2")]
    pub ground: String,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Expected set sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100,1000")]
    pub sizes: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Sets generated per run.
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn workers(requested: Option<usize>) -> CliResult<usize> {
    match requested {
        Some(0) => Err(CliError::usage("--workers must be positive")),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let workers = workers(cli.workers)?;
    // Only fails if a pool already exists, which cannot happen here.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global();
    match cli.command {
        Command::Datagen(a) => commands::datagen(&a),
        Command::Train(a) => commands::train(&a, workers),
        Command::Sample(a) => commands::sample(&a, workers),
        Command::Forecast(a) => commands::forecast(&a, workers),
        Command::Evaluate(a) => commands::evaluate(&a, workers),
        Command::Benchmark(a) => commands::benchmark(&a, workers),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let err = CliError::usage(first.trim_start_matches("error: "));
            eprintln!("{}", err.line());
            return err.class.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            e.class.exit_code()
        }
    }
}
