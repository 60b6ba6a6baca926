//! `strata`: singularity detection on point clouds from the command line.
//!
//! Exit status is 0 on success, 1 when an internal invariant breaks and 2
//! for bad input or parameters.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "strata", version, about = "Detect singular points in point clouds")]
struct Cli {
    /// JSON file with run settings; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every point at fixed hyperparameters.
    Detect,
    /// Pick hyperparameters by grid search, then score.
    Auto {
        /// Grid report CSV (default: `<output stem>.grid.csv`).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Test whether a cloud (or a column of p-values) comes from a manifold.
    MhTest,
    /// Sample a synthetic shape; distances to the singular locus go to
    /// `<output stem>.dist.csv`.
    Synth {
        #[arg(long, value_enum)]
        shape: ShapeArg,
        /// Intrinsic dimension for the dimension-indexed shapes.
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = strata::synth::DEFAULT_NOISE)]
        noise: f64,
    },
    /// ROC curve and AUC of a score column against ground truth.
    Roc {
        /// Ground-truth CSV: a 0/1 `label` column, or distances with `--within`.
        #[arg(long)]
        labels: PathBuf,
        /// Label a point singular when its distance is at most this value.
        #[arg(long)]
        within: Option<f64>,
        /// Score column of the input.
        #[arg(long, default_value = "log_inv_p")]
        column: String,
    },
    /// Reduce square grayscale images (one per row) to low DCT coefficients.
    IngestDct {
        /// Side of the kept coefficient block.
        #[arg(long, default_value_t = 10)]
        keep: usize,
    },
    /// Dimension-scaled synthetic benchmark.
    Suite {
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Comma-separated intrinsic dimensions.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        dims: Vec<usize>,
        /// Fraction of the full-size sample counts.
        #[arg(long, default_value_t = 0.2)]
        scale: f64,
        #[arg(long)]
        noise: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShapeArg {
    Circle,
    Sphere,
    TwoCircles,
    TwoSpheres,
    SolidBall,
    TwoDisks,
    Cone,
    PinchTorus,
    HollowCube,
    ThreeDisks,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    SolidBall,
    TwoSpheres,
    TwoDisks,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let internal = err
        .chain()
        .filter_map(|e| e.downcast_ref::<strata::Error>())
        .any(|e| !e.is_user_error());
    if internal {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
