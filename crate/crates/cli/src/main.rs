mod commands;
mod config;
mod error;
mod pgm;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use flexconn::inference::{DEFAULT_INTENSITY_CLAMP, DEFAULT_PERCENTILE, DEFAULT_THRESHOLD};
use flexconn::network::{DEFAULT_DEPTH, LAST_BANK_FILTERS};
use flexconn::targets::{DEFAULT_PATCH, DEFAULT_SIGMA, DEFAULT_VALIDATION_FRACTION};
use flexconn::training::{DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_EVAL_BATCH_SIZE, DEFAULT_LEARNING_RATE};

use config::RunConfig;
use error::{CliError, CliResult, EXIT_USAGE};

/// Lesion membership regression and segmentation for multi-contrast brain MRI.
///
/// Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
/// failure. Volumes are uncompressed single-file NIfTI-1; decompress .nii.gz
/// inputs first (e.g. `gunzip -k`).
#[derive(Parser)]
#[command(name = "flexconn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on (T1, FLAIR, mask) volume triples.
    Train(TrainArgs),
    /// Predict a membership volume and a thresholded segmentation.
    Predict(PredictArgs),
    /// Score automated segmentations against manual ones.
    Evaluate(EvaluateArgs),
    /// Dice at thresholds 0.05, 0.10, ..., 0.85.
    Sweep(SweepArgs),
    /// Write synthetic phantom cases.
    Phantom(PhantomArgs),
    /// Check analytic network gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration file of `key = value` lines; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct NetArgs {
    /// Filter banks per pathway (2-6).
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
    /// Filters in the last bank; each earlier bank doubles it.
    #[arg(long, default_value_t = LAST_BANK_FILTERS)]
    last_filters: usize,
}

#[derive(Args)]
struct PrepArgs {
    /// Percentile of nonzero intensities mapped to 1.
    #[arg(long, default_value_t = DEFAULT_PERCENTILE)]
    percentile: f64,
    /// Upper clamp of normalized intensities.
    #[arg(long, default_value_t = DEFAULT_INTENSITY_CLAMP)]
    intensity_clamp: f64,
    /// Volume axis (0, 1 or 2) along which 2D slices are taken.
    #[arg(long, default_value_t = 2)]
    slice_axis: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// T1-w / MPRAGE volumes, one per case.
    #[arg(long, num_args = 1..)]
    t1: Vec<PathBuf>,
    /// FLAIR volumes, one per case.
    #[arg(long, num_args = 1..)]
    flair: Vec<PathBuf>,
    /// Binary lesion masks, one per case.
    #[arg(long, num_args = 1..)]
    mask: Vec<PathBuf>,
    /// Output model file.
    #[arg(long)]
    out_model: Option<PathBuf>,
    /// Per-epoch loss CSV [default: <out-model>.csv].
    #[arg(long)]
    out_log: Option<PathBuf>,
    /// Seed for weight initialization, validation split and shuffling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    net: NetArgs,
    /// Passes over the training patches.
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    /// Batch size for the validation loss.
    #[arg(long, default_value_t = DEFAULT_EVAL_BATCH_SIZE)]
    eval_batch_size: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    learning_rate: f64,
    /// Fraction of patches held out for validation.
    #[arg(long, default_value_t = DEFAULT_VALIDATION_FRACTION)]
    validation_fraction: f64,
    /// Square patch side (odd).
    #[arg(long, default_value_t = DEFAULT_PATCH)]
    patch: usize,
    /// Gaussian sigma (voxels) used to smooth masks into membership targets.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    #[command(flatten)]
    prep: PrepArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Second model; memberships of both models are averaged.
    #[arg(long)]
    model2: Option<PathBuf>,
    #[arg(long)]
    t1: Vec<PathBuf>,
    #[arg(long)]
    flair: Vec<PathBuf>,
    /// Binary mask restricting the segmentation.
    #[arg(long)]
    wm_mask: Option<PathBuf>,
    /// Membership threshold in (0, 1].
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Output membership volume (float32).
    #[arg(long)]
    out_membership: Option<PathBuf>,
    /// Output segmentation volume (uint8).
    #[arg(long)]
    out_seg: Option<PathBuf>,
    /// Write one PGM image of the membership per slice into this directory.
    #[arg(long)]
    overlay_dir: Option<PathBuf>,
    #[command(flatten)]
    prep: PrepArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Automated segmentations, one per case.
    #[arg(long, num_args = 1..)]
    auto: Vec<PathBuf>,
    /// Manual segmentations, paired with --auto.
    #[arg(long, num_args = 1..)]
    manual: Vec<PathBuf>,
    /// Segmentations of a second method for paired Wilcoxon comparisons.
    #[arg(long, num_args = 1..)]
    compare: Vec<PathBuf>,
    /// Per-case metrics CSV.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Cohort summary CSV [default: <out-csv stem>_summary.csv].
    #[arg(long)]
    out_summary: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Membership volumes; several cases report the median Dice.
    #[arg(long, num_args = 1..)]
    membership: Vec<PathBuf>,
    /// Ground-truth masks, paired with --membership.
    #[arg(long, num_args = 1..)]
    truth: Vec<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of cases; lesion load rises from low to high across cases.
    #[arg(long, default_value_t = 1)]
    cases: usize,
    /// Volume size as X,Y,Z.
    #[arg(long, value_delimiter = ',', default_values_t = [64, 64, 32])]
    dims: Vec<usize>,
    /// Lesions per case at medium load.
    #[arg(long, default_value_t = 10)]
    lesions: usize,
    /// Smallest lesion semi-axis in voxels at medium load.
    #[arg(long, default_value_t = 1.5)]
    radius_min: f64,
    /// Largest lesion semi-axis in voxels at medium load.
    #[arg(long, default_value_t = 4.0)]
    radius_max: f64,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.03)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parameter coordinates to check.
    #[arg(long, default_value_t = 20)]
    coordinates: usize,
}

/// Defaults, then the `--config` file, then flags given on the command line.
fn resolve(matches: &ArgMatches, config_file: &Option<PathBuf>) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = config_file {
        cfg.apply_file(path)?;
    }
    for id in matches.ids() {
        let id = id.as_str();
        if !config::is_key(id) || matches.value_source(id) != Some(ValueSource::CommandLine) {
            continue;
        }
        let values: Vec<String> = matches
            .get_raw(id)
            .into_iter()
            .flatten()
            .map(|v| v.to_string_lossy().into_owned())
            .collect();
        cfg.set(id, &values)?;
    }
    Ok(cfg)
}

fn run(matches: &ArgMatches) -> CliResult {
    let cli = Cli::from_arg_matches(matches).map_err(|e| CliError::Usage(e.to_string()))?;
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    match cli.command {
        Command::Train(a) => commands::train(&resolve(sub, &a.config.config)?),
        Command::Predict(a) => commands::predict(&resolve(sub, &a.config.config)?),
        Command::Evaluate(a) => commands::evaluate(&resolve(sub, &a.config.config)?),
        Command::Sweep(a) => commands::sweep(&resolve(sub, &a.config.config)?),
        Command::Phantom(a) => commands::phantom(&commands::PhantomOptions {
            out_dir: a.out_dir,
            cases: a.cases,
            dims: a
                .dims
                .as_slice()
                .try_into()
                .map_err(|_| CliError::Usage(format!("--dims takes X,Y,Z, got {} values", a.dims.len())))?,
            lesions: a.lesions,
            radius: (a.radius_min, a.radius_max),
            noise: a.noise,
            seed: a.seed,
        }),
        Command::Gradcheck(a) => commands::gradcheck(a.seed, a.coordinates),
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
