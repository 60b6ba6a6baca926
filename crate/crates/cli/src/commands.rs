use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use strata::evaluation::{roc_curve, run_synthetic_suite, suite_csv, SuiteFamily, SuiteOptions};
use strata::io::{points_from_raw, points_to_csv, read_points_csv, read_raw_file, write_atomic, RawTable};
use strata::manifold_test::{mh_report, DEFAULT_SUPC_THRESHOLDS};
use strata::scoring::{default_alpha_reg, filter_labels, log_inv_p, DEFAULT_K_DISP};
use strata::synth::{generate, Shape, ShapeSpec};
use strata::tuning::{grid_search, local_scale, SearchGrid, SearchOptions};
use strata::uniformity::singularity_scores;
use strata::{PointCloud, UniformityResult};

use crate::config::RunConfig;
use crate::{Cli, Command, FamilyArg, ShapeArg};

/// Points probed when detecting the local scale for `auto`.
const SCALE_PROBES: usize = 50;

pub fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.run)?;
    if let Some(t) = cfg.threads {
        if t == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Detect => detect(&cfg),
        Command::Auto { report } => auto(&cfg, report),
        Command::MhTest => mh_test(&cfg),
        Command::Synth { shape, dim, n, noise } => synth(&cfg, shape, dim, n, noise),
        Command::Roc { labels, within, column } => roc(&cfg, &labels, within, &column),
        Command::IngestDct { keep } => ingest_dct(&cfg, keep),
        Command::Suite {
            family,
            dims,
            scale,
            noise,
        } => suite(&cfg, family, &dims, scale, noise),
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    write_atomic(path, contents.as_bytes())?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// `dir/name.csv` -> `dir/name.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `index,est_dim,k_obs,mmd,p_value,log_inv_p,label`; unscored points leave
/// the numeric cells empty and carry label 0.
pub fn scores_csv(results: &[UniformityResult], labels: &[u8]) -> String {
    let p: Vec<Option<f64>> = results.iter().map(|u| u.p_value).collect();
    let l = log_inv_p(&p);
    let mut s = String::from("index,est_dim,k_obs,mmd,p_value,log_inv_p,label\n");
    for ((u, li), y) in results.iter().zip(&l).zip(labels) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            u.index,
            opt(u.d_hat),
            u.k_obs,
            opt(u.mmd),
            opt(u.p_value),
            opt(*li),
            y
        );
    }
    s
}

fn score_cloud(cfg: &RunConfig, cloud: &PointCloud) -> Result<Vec<UniformityResult>> {
    let params = cfg.hyperparams()?;
    Ok(singularity_scores(cloud, &params, &cfg.null_cache(), cfg.subsample(), cfg.seed())?)
}

fn detect(cfg: &RunConfig) -> Result<()> {
    let cloud = read_points_csv(cfg.input()?)?;
    let out = cfg.output()?;
    let res = score_cloud(cfg, &cloud)?;
    let labels = filter_labels(&res.iter().map(|u| u.p_value).collect::<Vec<_>>())?;
    write(out, &scores_csv(&res, &labels))
}

#[derive(Serialize)]
struct AutoSummary {
    radius: f64,
    eta: f64,
    alpha: f64,
    dispersion: f64,
    n_singular: usize,
    expansions: usize,
}

fn auto(cfg: &RunConfig, report: Option<PathBuf>) -> Result<()> {
    let cloud = read_points_csv(cfg.input()?)?;
    let out = cfg.output()?;
    let grid = match cfg.grid()? {
        Some(g) => g,
        None => {
            let scale = local_scale(&cloud, SCALE_PROBES.min(cloud.len()), cfg.seed())?;
            log::info!("local scale {:.4}, dimension {:.2}", scale.r_tilde, scale.dim_estimate);
            SearchGrid::from_local_scale(&scale)
        }
    };
    let opts = SearchOptions {
        k_disp: DEFAULT_K_DISP,
        alpha_reg: default_alpha_reg(cloud.len()),
        subsample_fraction: cfg.subsample(),
        seed: cfg.seed(),
    };
    let res = grid_search(&cloud, &grid, &cfg.null_cache(), &opts)?;
    write(out, &scores_csv(&res.best_scores, &res.best_report.labels))?;
    write(&report.unwrap_or_else(|| sibling(out, "grid.csv")), &res.report_csv())?;
    let row = &res.rows[res.best_row];
    let summary = AutoSummary {
        radius: row.r,
        eta: row.eta,
        alpha: row.alpha,
        dispersion: res.best_report.dispersion,
        n_singular: res.best_report.n_singular(),
        expansions: res.expansions,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn column_index(table: &RawTable, name: &str) -> Option<usize> {
    table.header.as_ref()?.iter().position(|h| h == name)
}

/// Optional numeric column; empty cells are missing values.
fn optional_column(table: &RawTable, col: usize, path: &Path) -> Result<Vec<Option<f64>>> {
    table
        .rows
        .iter()
        .map(|(line, cells)| {
            let cell = cells.get(col).map(String::as_str).unwrap_or("");
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse::<f64>()
                .map(Some)
                .map_err(|_| anyhow!("{}: line {line}: not a number: {cell:?}", path.display()))
        })
        .collect()
}

fn mh_test(cfg: &RunConfig) -> Result<()> {
    let input = cfg.input()?;
    let table = read_raw_file(input)?;
    let p = match column_index(&table, "p_value") {
        Some(c) => optional_column(&table, c, input)?,
        None => {
            let cloud = points_from_raw(&table, input)?;
            score_cloud(cfg, &cloud)?.iter().map(|u| u.p_value).collect()
        }
    };
    let kernel = cfg.hyperparams().map(|h| h.kernel).unwrap_or_default();
    let report = mh_report(&p, &DEFAULT_SUPC_THRESHOLDS, &kernel, &cfg.null_cache())?;
    let json = serde_json::to_string_pretty(&report)?;
    match &cfg.output {
        Some(out) => write(out, &(json + "\n")),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn shape_of(arg: ShapeArg, dim: usize) -> Shape {
    match arg {
        ShapeArg::Circle => Shape::Circle,
        ShapeArg::Sphere => Shape::Sphere(dim),
        ShapeArg::TwoCircles => Shape::TwoCircles,
        ShapeArg::TwoSpheres => Shape::TwoSpheres(dim),
        ShapeArg::SolidBall => Shape::SolidBall(dim),
        ShapeArg::TwoDisks => Shape::TwoDisks(dim),
        ShapeArg::Cone => Shape::Cone,
        ShapeArg::PinchTorus => Shape::PinchTorus,
        ShapeArg::HollowCube => Shape::HollowCube,
        ShapeArg::ThreeDisks => Shape::ThreeDisks,
    }
}

fn synth(cfg: &RunConfig, shape: ShapeArg, dim: usize, n: usize, noise: f64) -> Result<()> {
    let out = cfg.output()?;
    let labeled = generate(&ShapeSpec {
        shape: shape_of(shape, dim),
        n,
        noise_amplitude: noise,
        seed: cfg.seed(),
    })?;
    let mut dist = String::from("dist_to_singular\n");
    for d in &labeled.dist_to_singular {
        let _ = writeln!(dist, "{d}");
    }
    write(out, &points_to_csv(&labeled.cloud))?;
    write(&sibling(out, "dist.csv"), &dist)
}

/// Ground truth per row: a 0/1 `label` column (or the only column), or
/// distances thresholded at `within`.
fn read_truth(path: &Path, within: Option<f64>) -> Result<Vec<u8>> {
    let table = read_raw_file(path)?;
    let col = match within {
        Some(_) => column_index(&table, "dist_to_singular"),
        None => column_index(&table, "label"),
    }
    .unwrap_or(0);
    let values = optional_column(&table, col, path)?;
    values
        .iter()
        .zip(&table.rows)
        .map(|(v, (line, _))| {
            let v = v.ok_or_else(|| anyhow!("{}: line {line}: missing label", path.display()))?;
            match within {
                Some(s) => Ok(u8::from(v <= s)),
                None if v == 0.0 || v == 1.0 => Ok(v as u8),
                None => bail!("{}: line {line}: label must be 0 or 1, got {v}", path.display()),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct RocSummary {
    auc: f64,
    n: usize,
    n_missing: usize,
}

fn roc(cfg: &RunConfig, labels: &Path, within: Option<f64>, column: &str) -> Result<()> {
    let input = cfg.input()?;
    let table = read_raw_file(input)?;
    let col = column_index(&table, column)
        .ok_or_else(|| anyhow!("{}: no column named {column:?}", input.display()))?;
    let scores = optional_column(&table, col, input)?;
    let truth = read_truth(labels, within)?;
    if truth.len() != scores.len() {
        bail!(
            "{} has {} rows but {} has {}",
            input.display(),
            scores.len(),
            labels.display(),
            truth.len()
        );
    }
    let curve = roc_curve(&scores, &truth)?;
    if let Some(out) = &cfg.output {
        write(out, &curve.to_csv())?;
    }
    let summary = RocSummary {
        auc: curve.auc,
        n: scores.len(),
        n_missing: curve.n_missing,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn ingest_dct(cfg: &RunConfig, keep: usize) -> Result<()> {
    let images = read_points_csv(cfg.input()?)?;
    let out = cfg.output()?;
    let rows: Vec<Vec<f64>> = images
        .rows()
        .map(|img| strata::dct::dct_reduce(img, keep))
        .collect::<strata::Result<_>>()?;
    write(out, &points_to_csv(&PointCloud::from_rows(&rows)?))
}

fn suite(cfg: &RunConfig, family: FamilyArg, dims: &[usize], scale: f64, noise: Option<f64>) -> Result<()> {
    let family = match family {
        FamilyArg::SolidBall => SuiteFamily::SolidBall,
        FamilyArg::TwoSpheres => SuiteFamily::TwoSpheres,
        FamilyArg::TwoDisks => SuiteFamily::TwoDisks,
    };
    let defaults = SuiteOptions::default();
    let opts = SuiteOptions {
        scale,
        eta: cfg.eta.unwrap_or(defaults.eta),
        alpha: cfg.alpha.unwrap_or(defaults.alpha),
        noise_amplitude: noise.unwrap_or(defaults.noise_amplitude),
        seed: cfg.seed(),
    };
    let rows = run_synthetic_suite(family, dims, &opts, &cfg.null_cache())?;
    let csv = suite_csv(&rows);
    match &cfg.output {
        Some(out) => write(out, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
