//! Automatic hyperparameter selection.
//!
//! The radius range comes from local-scale detection: Levina-Bickel
//! dimension estimates over a geometric ladder of neighborhood sizes,
//! averaged over random probes, with the knee of the (reversed) curve
//! marking where the estimate settles. A grid over radius, PCA threshold and
//! kernel parameter is then searched for the lowest dispersion score; when
//! the winner sits on the edge of the radius axis, the axis is extended in
//! steps that grow the local volume `omega_d r^d` linearly.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest_sorted, PointCloud};
use crate::mmd::PowerSeriesKernel;
use crate::null::NullCache;
use crate::scoring::{
    dispersion, filter_labels, knee_detect, knn_neighbor_sets, CurveShape, DampingFunction,
    DispersionReport, KNEE_SENSITIVITY,
};
use crate::uniformity::{singularity_scores, Hyperparams, NeighborhoodRule, UniformityResult};

pub const DEFAULT_ETAS: [f64; 3] = [0.7, 0.8, 0.9];
pub const DEFAULT_ALPHAS: [f64; 3] = [0.3, 0.5, 0.7];
pub const DEFAULT_N_RADII: usize = 4;
const LADDER_BASE: usize = 10;
const LADDER_MAX: usize = 1000;
/// Safety cap on the number of radius expansions.
const MAX_EXPANSIONS: usize = 32;

/// Levina-Bickel maximum-likelihood dimension from the sorted distances
/// `T_1 <= ... <= T_k` to the `k` nearest neighbors:
/// `[(1/(k-2)) sum_{j<k} ln(T_k / T_j)]^(-1)`. Zero distances are skipped.
pub fn levina_bickel_from_distances(dists: &[f64]) -> Result<f64> {
    let k = dists.len();
    if k < 3 {
        return Err(Error::InvalidParameter(format!("Levina-Bickel needs k >= 3, got {k}")));
    }
    let tk = dists[k - 1];
    if !(tk > 0.0) {
        return Err(Error::DegenerateNeighborhood);
    }
    let terms: Vec<f64> = dists[..k - 1]
        .iter()
        .filter(|&&t| t > 0.0)
        .map(|&t| (tk / t).ln())
        .collect();
    let sum: f64 = terms.iter().sum();
    if terms.len() < 2 || !(sum > 0.0) {
        return Err(Error::DegenerateNeighborhood);
    }
    Ok((terms.len() - 1) as f64 / sum)
}

/// Levina-Bickel estimate at point `i` from its `k` nearest neighbors.
pub fn levina_bickel_dim(cloud: &PointCloud, i: usize, k: usize) -> Result<f64> {
    if k + 1 > cloud.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds n - 1 = {}",
            cloud.len().saturating_sub(1)
        )));
    }
    let d: Vec<f64> = nearest_sorted(cloud, i, k).iter().map(|(s, _)| s.sqrt()).collect();
    levina_bickel_from_distances(&d)
}

/// Result of local-scale detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalScale {
    pub r_tilde: f64,
    pub radius_range: (f64, f64),
    /// Neighborhood size at the knee.
    pub k_star: usize,
    /// Averaged dimension estimate at the knee.
    pub dim_estimate: f64,
    pub ladder: Vec<usize>,
    pub mean_dims: Vec<f64>,
}

/// Neighborhood sizes `10, 20, 40, ...` up to `min(n - 1, 1000)`.
pub fn k_ladder(n: usize) -> Vec<usize> {
    let cap = n.saturating_sub(1).min(LADDER_MAX);
    let mut out = Vec::new();
    let mut k = LADDER_BASE;
    while k <= cap {
        out.push(k);
        k *= 2;
    }
    out
}

/// Detects the scale `r_tilde` at which local dimension estimates settle
/// and returns the search range `[1.5 r_tilde, 5 r_tilde]`.
pub fn local_scale(cloud: &PointCloud, n_probes: usize, seed: u64) -> Result<LocalScale> {
    let n = cloud.len();
    if n < 50 {
        return Err(Error::InvalidParameter(format!("local scale needs n >= 50, got {n}")));
    }
    let ladder = k_ladder(n);
    let kmax = *ladder.last().expect("n >= 50 gives a nonempty ladder");
    let n_probes = n_probes.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = sample(&mut rng, n, n_probes).into_vec();
    probes.sort_unstable();

    // Per probe: distances to the kmax nearest neighbors.
    let dists: Vec<Vec<f64>> = probes
        .par_iter()
        .map(|&i| nearest_sorted(cloud, i, kmax).iter().map(|(s, _)| s.sqrt()).collect())
        .collect();

    let mut mean_dims = Vec::with_capacity(ladder.len());
    for &k in &ladder {
        let est: Vec<f64> = dists
            .iter()
            .filter_map(|d| levina_bickel_from_distances(&d[..k]).ok())
            .collect();
        if est.is_empty() {
            return Err(Error::DegenerateNeighborhood);
        }
        mean_dims.push(est.iter().sum::<f64>() / est.len() as f64);
    }

    // Walk back from the largest neighborhood: positions 0.. index the
    // ladder in reverse, and the estimate rises once noise takes over.
    let m = ladder.len();
    let rev_x: Vec<f64> = (0..m).map(|j| j as f64).collect();
    let rev_y: Vec<f64> = mean_dims.iter().rev().copied().collect();
    let knee_pos = knee_detect(&rev_x, &rev_y, KNEE_SENSITIVITY, CurveShape::ConvexInc)
        .map(|x| x as usize);
    let ladder_idx = match knee_pos {
        Some(p) => m - 1 - p,
        None => m / 2,
    };
    let k_star = ladder[ladder_idx];
    let r_tilde = dists.iter().map(|d| d[k_star - 1]).sum::<f64>() / dists.len() as f64;
    if !(r_tilde > 0.0) {
        return Err(Error::DegenerateNeighborhood);
    }
    Ok(LocalScale {
        r_tilde,
        radius_range: (1.5 * r_tilde, 5.0 * r_tilde),
        k_star,
        dim_estimate: mean_dims[ladder_idx],
        ladder,
        mean_dims,
    })
}

/// Axes of the hyperparameter grid plus hard limits on radius expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub radii: Vec<f64>,
    pub etas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub radius_bounds: (f64, f64),
    /// Dimension used for the volume coordinate `r^d` during expansion.
    pub volume_dim: f64,
}

impl SearchGrid {
    /// Default grid from a detected local scale: radii evenly spaced in
    /// log-volume across `[1.5 r~, 5 r~]`, expansion bounded to `[r~, 10 r~]`.
    pub fn from_local_scale(scale: &LocalScale) -> Self {
        let (lo, hi) = scale.radius_range;
        let radii = (0..DEFAULT_N_RADII)
            .map(|i| lo * (hi / lo).powf(i as f64 / (DEFAULT_N_RADII - 1) as f64))
            .collect();
        Self {
            radii,
            etas: DEFAULT_ETAS.to_vec(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            radius_bounds: (scale.r_tilde, 10.0 * scale.r_tilde),
            volume_dim: scale.dim_estimate.round().max(1.0),
        }
    }

    /// A grid holding exactly one configuration, with no room to expand.
    pub fn single(r: f64, eta: f64, alpha: f64) -> Self {
        Self {
            radii: vec![r],
            etas: vec![eta],
            alphas: vec![alpha],
            radius_bounds: (r, r),
            volume_dim: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() || self.etas.is_empty() || self.alphas.is_empty() {
            return Err(Error::InvalidParameter("search grid has an empty axis".into()));
        }
        if self.radii.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("radii must be strictly ascending".into()));
        }
        let (lo, hi) = self.radius_bounds;
        if self.radii.iter().any(|&r| !(r > 0.0) || r < lo * (1.0 - 1e-12) || r > hi * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter("radii must be positive and within bounds".into()));
        }
        if self.etas.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::InvalidParameter("etas must lie in (0,1)".into()));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::InvalidParameter("alphas must lie in (0,1)".into()));
        }
        if !(self.volume_dim >= 1.0) {
            return Err(Error::InvalidParameter("volume dimension must be >= 1".into()));
        }
        Ok(())
    }
}

/// Settings shared by every configuration of a search.
#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub k_disp: usize,
    pub alpha_reg: f64,
    pub subsample_fraction: f64,
    pub seed: u64,
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub r: f64,
    pub eta: f64,
    pub alpha: f64,
    pub dispersion: Option<f64>,
    pub n_singular: usize,
    pub warn_degenerate: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best: Hyperparams,
    pub best_row: usize,
    pub rows: Vec<GridRow>,
    pub best_scores: Vec<UniformityResult>,
    pub best_report: DispersionReport,
    pub expansions: usize,
}

impl GridSearchResult {
    /// Grid report as CSV: `r,eta,alpha,dispersion,n_singular,warn_degenerate`.
    pub fn report_csv(&self) -> String {
        let mut s = String::from("r,eta,alpha,dispersion,n_singular,warn_degenerate\n");
        for row in &self.rows {
            let disp = row.dispersion.map(|d| format!("{d}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.r, row.eta, row.alpha, disp, row.n_singular, row.warn_degenerate
            ));
        }
        s
    }
}

struct Evaluated {
    row: GridRow,
    detail: Option<(Vec<UniformityResult>, DispersionReport)>,
}

fn evaluate(
    cloud: &PointCloud,
    sets: &[Vec<usize>],
    r: f64,
    eta: f64,
    alpha: f64,
    nulls: &NullCache,
    opts: &SearchOptions,
) -> Evaluated {
    let run = || -> Result<(Vec<UniformityResult>, DispersionReport)> {
        let params = Hyperparams {
            neighborhood: NeighborhoodRule::Radius(r),
            eta,
            kernel: PowerSeriesKernel::geometric(alpha)?,
        };
        let scores = singularity_scores(cloud, &params, nulls, opts.subsample_fraction, opts.seed)?;
        let p: Vec<Option<f64>> = scores.iter().map(|s| s.p_value).collect();
        let labels = filter_labels(&p)?;
        let report = dispersion(
            cloud,
            &labels,
            sets,
            opts.alpha_reg,
            DampingFunction::purity_default(),
            DampingFunction::point_default(),
        )?;
        Ok((scores, report))
    };
    match run() {
        Ok((scores, report)) => {
            let n_singular = report.n_singular();
            Evaluated {
                row: GridRow {
                    r,
                    eta,
                    alpha,
                    dispersion: Some(report.dispersion),
                    n_singular,
                    warn_degenerate: n_singular == 0,
                    error: None,
                },
                detail: Some((scores, report)),
            }
        }
        Err(e) => Evaluated {
            row: GridRow {
                r,
                eta,
                alpha,
                dispersion: None,
                n_singular: 0,
                warn_degenerate: false,
                error: Some(e.to_string()),
            },
            detail: None,
        },
    }
}

/// Searches the grid for the configuration with the lowest dispersion
/// (ties: smaller radius, then smaller eta, then smaller alpha), extending
/// the radius axis while the winner sits on its edge.
///
/// Configurations are evaluated one after another; each evaluation is
/// parallel over points.
pub fn grid_search(
    cloud: &PointCloud,
    grid: &SearchGrid,
    nulls: &NullCache,
    opts: &SearchOptions,
) -> Result<GridSearchResult> {
    grid.validate()?;
    let sets = knn_neighbor_sets(cloud, opts.k_disp);
    let mut radii = grid.radii.clone();
    let mut evaluated: Vec<Evaluated> = Vec::new();
    let mut done_radii: Vec<f64> = Vec::new();
    let mut expansions = 0;

    loop {
        for &r in &radii {
            if done_radii.contains(&r) {
                continue;
            }
            for &eta in &grid.etas {
                for &alpha in &grid.alphas {
                    evaluated.push(evaluate(cloud, &sets, r, eta, alpha, nulls, opts));
                }
            }
            done_radii.push(r);
        }

        let Some(best) = best_index(&evaluated) else {
            let failures: Vec<String> = evaluated
                .iter()
                .map(|e| {
                    format!(
                        "(r={}, eta={}, alpha={}): {}",
                        e.row.r,
                        e.row.eta,
                        e.row.alpha,
                        e.row.error.as_deref().unwrap_or("unknown")
                    )
                })
                .collect();
            return Err(Error::AllConfigurationsFailed(failures.join("; ")));
        };

        let best_r = evaluated[best].row.r;
        let r_min = done_radii.iter().copied().fold(f64::INFINITY, f64::min);
        let r_max = done_radii.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let next = if expansions >= MAX_EXPANSIONS || done_radii.len() < 2 {
            None
        } else if best_r == r_max {
            expand_up(&done_radii, grid)
        } else if best_r == r_min {
            expand_down(&done_radii, grid)
        } else {
            None
        };
        match next {
            Some(new_radii) if !new_radii.is_empty() => {
                log::info!("winner r = {best_r} on the grid edge; extending radii with {new_radii:?}");
                radii = new_radii;
                expansions += 1;
            }
            _ => {
                let rows: Vec<GridRow> = evaluated.iter().map(|e| e.row.clone()).collect();
                let winner = evaluated.swap_remove(best);
                if winner.row.warn_degenerate {
                    log::warn!(
                        "best configuration (r={}, eta={}, alpha={}) labels no point singular",
                        winner.row.r,
                        winner.row.eta,
                        winner.row.alpha
                    );
                }
                let (best_scores, best_report) = winner.detail.expect("winner has details");
                return Ok(GridSearchResult {
                    best: Hyperparams {
                        neighborhood: NeighborhoodRule::Radius(winner.row.r),
                        eta: winner.row.eta,
                        kernel: PowerSeriesKernel::geometric(winner.row.alpha)?,
                    },
                    best_row: best,
                    rows,
                    best_scores,
                    best_report,
                    expansions,
                });
            }
        }
    }
}

fn best_index(evaluated: &[Evaluated]) -> Option<usize> {
    evaluated
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.row.dispersion.map(|d| (i, d, &e.row)))
        .min_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then(a.2.r.total_cmp(&b.2.r))
                .then(a.2.eta.total_cmp(&b.2.eta))
                .then(a.2.alpha.total_cmp(&b.2.alpha))
        })
        .map(|(i, _, _)| i)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// New radii above the current maximum, stepping the volume coordinate
/// `r^d` by the last step of the current axis.
fn expand_up(done: &[f64], grid: &SearchGrid) -> Option<Vec<f64>> {
    let radii = sorted(done);
    let d = grid.volume_dim;
    let m = radii.len();
    let v_last = radii[m - 1].powf(d);
    let step = v_last - radii[m - 2].powf(d);
    let hi = grid.radius_bounds.1;
    if !(step > 0.0) || radii[m - 1] >= hi {
        return None;
    }
    let mut out = Vec::new();
    for j in 1..grid.radii.len().max(2) {
        let r = (v_last + step * j as f64).powf(1.0 / d).min(hi);
        if out.last().is_some_and(|&p: &f64| p >= r) {
            break;
        }
        out.push(r);
        if r >= hi {
            break;
        }
    }
    Some(out)
}

/// New radii below the current minimum, stepping the volume coordinate down
/// by the first step of the current axis.
fn expand_down(done: &[f64], grid: &SearchGrid) -> Option<Vec<f64>> {
    let radii = sorted(done);
    let d = grid.volume_dim;
    let v_first = radii[0].powf(d);
    let step = radii[1].powf(d) - v_first;
    let lo = grid.radius_bounds.0;
    if !(step > 0.0) || radii[0] <= lo {
        return None;
    }
    let mut out = Vec::new();
    for j in 1..grid.radii.len().max(2) {
        let v = v_first - step * j as f64;
        let r = if v > 0.0 { v.powf(1.0 / d).max(lo) } else { lo };
        if out.last().is_some_and(|&p: &f64| p <= r) {
            break;
        }
        out.push(r);
        if r <= lo {
            break;
        }
    }
    out.reverse();
    Some(out)
}
