//! Run settings: a JSON config file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use strata::tuning::SearchGrid;
use strata::{Hyperparams, NullCache};

/// Every field is optional so that a file can set some and flags the rest.
#[derive(Debug, Clone, Default, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Input CSV.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Output file.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Neighborhood radius.
    #[arg(long, global = true)]
    pub radius: Option<f64>,
    /// Neighborhood size (k nearest neighbors).
    #[arg(long, global = true)]
    pub knn: Option<usize>,
    /// PCA explained-variance threshold.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Geometric kernel parameter.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for cached null tables.
    #[arg(long, global = true)]
    pub null_dir: Option<PathBuf>,
    /// Simulations per null table.
    #[arg(long, global = true)]
    pub null_sims: Option<usize>,
    /// Reference sample size of the null tables.
    #[arg(long, global = true)]
    pub null_nref: Option<usize>,
    /// Fraction of points scored; the rest copy their nearest scored point.
    #[arg(long, global = true)]
    pub subsample: Option<f64>,
    /// Search grid as JSON text or a path to a JSON file.
    #[arg(long, global = true)]
    pub grid: Option<String>,
}

pub const DEFAULT_ETA: f64 = 0.8;
pub const DEFAULT_ALPHA: f64 = 0.5;

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RunConfig {
    /// File values first, then any flag given on the command line.
    pub fn resolve(file: Option<&Path>, flags: &RunConfig) -> Result<RunConfig> {
        let mut base = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        overlay!(
            base, flags, input, output, radius, knn, eta, alpha, seed, threads, null_dir, null_sims, null_nref,
            subsample, grid
        );
        if base.radius.is_some() && base.knn.is_some() {
            bail!("--radius and --knn are mutually exclusive");
        }
        Ok(base)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn subsample(&self) -> f64 {
        self.subsample.unwrap_or(1.0)
    }

    pub fn input(&self) -> Result<&Path> {
        self.input.as_deref().context("--input is required")
    }

    pub fn output(&self) -> Result<&Path> {
        self.output.as_deref().context("--output is required")
    }

    pub fn hyperparams(&self) -> Result<Hyperparams> {
        let eta = self.eta.unwrap_or(DEFAULT_ETA);
        let alpha = self.alpha.unwrap_or(DEFAULT_ALPHA);
        Ok(match (self.radius, self.knn) {
            (Some(r), None) => Hyperparams::radius(r, eta, alpha)?,
            (None, Some(k)) => Hyperparams::knn(k, eta, alpha)?,
            _ => bail!("exactly one of --radius or --knn is required"),
        })
    }

    pub fn null_cache(&self) -> NullCache {
        NullCache::new(
            self.null_dir.clone(),
            self.seed(),
            self.null_nref.unwrap_or(strata::null::DEFAULT_N_REF),
            self.null_sims.unwrap_or(strata::null::DEFAULT_N_SIMS),
        )
    }

    pub fn grid(&self) -> Result<Option<SearchGrid>> {
        let Some(g) = &self.grid else { return Ok(None) };
        let text = if Path::new(g).is_file() {
            std::fs::read_to_string(g).with_context(|| format!("reading grid {g}"))?
        } else {
            g.clone()
        };
        let spec: GridSpec = serde_json::from_str(&text).context("parsing --grid")?;
        let grid = spec.into_grid();
        grid.validate()?;
        Ok(Some(grid))
    }
}

/// User-facing grid. Without `radius_bounds` the radius axis cannot be
/// extended beyond the listed radii.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    radii: Vec<f64>,
    etas: Vec<f64>,
    alphas: Vec<f64>,
    radius_bounds: Option<(f64, f64)>,
    volume_dim: Option<f64>,
}

impl GridSpec {
    fn into_grid(self) -> SearchGrid {
        let lo = self.radii.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.radii.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut radii = self.radii;
        radii.sort_by(f64::total_cmp);
        SearchGrid {
            radii,
            etas: self.etas,
            alphas: self.alphas,
            radius_bounds: self.radius_bounds.unwrap_or((lo, hi)),
            volume_dim: self.volume_dim.unwrap_or(1.0),
        }
    }
}
