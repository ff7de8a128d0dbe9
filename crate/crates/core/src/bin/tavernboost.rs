//! Command-line driver: one binary covering cohort generation, training,
//! attribution, feature selection, repeated cross-validation, grid search
//! and batch scoring. Configuration comes from an optional JSON file with
//! individual flags overriding it; all artifacts land in the output
//! directory next to a reproducibility manifest.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tavernboost::pipeline::{run_pipeline, Mode, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "tavernboost",
    version,
    about = "Boosted-tree toolkit for imbalanced clinical cohorts"
)]
struct Cli {
    /// Pipeline mode to run.
    #[arg(value_enum)]
    mode: Mode,

    /// JSON config file; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Input CSV (for `generate`: an optional cohort-spec JSON).
    #[arg(long)]
    data: Option<PathBuf>,

    /// Schema JSON describing the CSV columns.
    #[arg(long)]
    schema: Option<PathBuf>,

    /// Model file: written by `train`, read by `score`.
    #[arg(long)]
    model: Option<PathBuf>,

    /// Output directory for artifacts (default "reports").
    #[arg(long)]
    out: Option<PathBuf>,

    /// Base seed; every random stream derives from it.
    #[arg(long)]
    seed: Option<u64>,

    /// Cross-validation repeats (validate defaults to 5, search to 3).
    #[arg(long)]
    repeats: Option<usize>,

    /// Fold count; omit for leave-one-out in validate (search defaults to 5).
    #[arg(long)]
    k: Option<usize>,

    /// Boosting iterations (number of trees).
    #[arg(long)]
    iterations: Option<usize>,

    /// Maximum tree depth.
    #[arg(long)]
    depth: Option<usize>,

    /// Learning rate (leaf shrinkage).
    #[arg(long)]
    lr: Option<f64>,

    /// Feature-selection cut as a fraction of the top mean |φ|.
    #[arg(long = "threshold-level")]
    threshold_level: Option<f64>,
}

fn build_config(cli: Cli) -> tavernboost::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    config.mode = cli.mode;
    if let Some(data) = cli.data {
        config.data = Some(data);
    }
    if let Some(schema) = cli.schema {
        config.schema = Some(schema);
    }
    if let Some(model) = cli.model {
        config.model = Some(model);
    }
    if let Some(out) = cli.out {
        config.out = out;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(repeats) = cli.repeats {
        config.repeats = Some(repeats);
    }
    if let Some(k) = cli.k {
        config.k = Some(k);
    }
    if let Some(iterations) = cli.iterations {
        config.iterations = iterations;
    }
    if let Some(depth) = cli.depth {
        config.max_depth = depth;
    }
    if let Some(lr) = cli.lr {
        config.learning_rate = lr;
    }
    if let Some(level) = cli.threshold_level {
        config.threshold_level = level;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(cli) {
        Ok(config) => config,
        Err(error) => {
            eprintln!("error: {error}");
            return ExitCode::FAILURE;
        }
    };
    match run_pipeline(&config) {
        Ok(manifest) => {
            println!("wrote {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::FAILURE
        }
    }
}
