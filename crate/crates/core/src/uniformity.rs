//! The per-point uniformity test and its batch driver.
//!
//! For a query point: isolate its neighborhood, rescale it to the unit ball,
//! estimate the local dimension `d_hat` by PCA, project onto the top `d_hat`
//! directions, and measure the squared MMD against `unif_{d_hat}`. The
//! p-value comes from the null table for `d_hat`, scaled by the observed
//! neighborhood size.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    local_pca, neighbors_knn, neighbors_radius, project, sq_dist, Neighborhood, PointCloud,
    MIN_NEIGHBORHOOD,
};
use crate::mmd::{mmd_sq_vs_uniform_disk, PowerSeriesKernel};
use crate::null::NullCache;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborhoodRule {
    Radius(f64),
    Knn(usize),
}

/// Hyperparameters of one detection run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub neighborhood: NeighborhoodRule,
    /// PCA explained-variance threshold in (0, 1).
    pub eta: f64,
    pub kernel: PowerSeriesKernel,
}

impl Hyperparams {
    pub fn radius(r: f64, eta: f64, alpha: f64) -> Result<Self> {
        let p = Self {
            neighborhood: NeighborhoodRule::Radius(r),
            eta,
            kernel: PowerSeriesKernel::geometric(alpha)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn knn(k: usize, eta: f64, alpha: f64) -> Result<Self> {
        let p = Self {
            neighborhood: NeighborhoodRule::Knn(k),
            eta,
            kernel: PowerSeriesKernel::geometric(alpha)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0,1), got {}", self.eta)));
        }
        match self.neighborhood {
            NeighborhoodRule::Radius(r) if !(r > 0.0 && r.is_finite()) => {
                Err(Error::InvalidParameter(format!("radius must be positive, got {r}")))
            }
            NeighborhoodRule::Knn(0) => Err(Error::InvalidParameter("k must be >= 1".into())),
            _ => Ok(()),
        }
    }
}

/// Outcome of the uniformity test at one point. The optional fields are
/// either all present or all absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformityResult {
    pub index: usize,
    pub d_hat: Option<usize>,
    pub k_obs: usize,
    pub mmd: Option<f64>,
    pub p_value: Option<f64>,
}

impl UniformityResult {
    fn missing(index: usize, k_obs: usize) -> Self {
        Self {
            index,
            d_hat: None,
            k_obs,
            mmd: None,
            p_value: None,
        }
    }

    pub fn is_scored(&self) -> bool {
        self.p_value.is_some()
    }
}

/// Score before the null lookup.
#[derive(Debug, Clone, Copy)]
struct LocalScore {
    k_obs: usize,
    d_hat: usize,
    mmd: f64,
}

fn isolate(cloud: &PointCloud, i: usize, rule: NeighborhoodRule) -> Result<Neighborhood> {
    match rule {
        NeighborhoodRule::Radius(r) => neighbors_radius(cloud, i, r),
        NeighborhoodRule::Knn(k) => neighbors_knn(cloud, i, k.min(cloud.len().saturating_sub(1))),
    }
}

/// Everything up to the MMD; `None` for neighborhoods too small (or too
/// degenerate) to test.
fn local_score(cloud: &PointCloud, i: usize, params: &Hyperparams) -> Result<Option<LocalScore>> {
    let nb = match isolate(cloud, i, params.neighborhood) {
        Ok(nb) => nb,
        Err(Error::DegenerateNeighborhood) => return Ok(None),
        Err(e) => return Err(e),
    };
    if nb.len() < MIN_NEIGHBORHOOD {
        return Ok(None);
    }
    let pca = match local_pca(&nb.rescaled, params.eta) {
        Ok(p) => p,
        Err(Error::DegenerateNeighborhood) => return Ok(None),
        Err(e) => return Err(e),
    };
    let projected = project(&nb, &pca);
    let mmd = mmd_sq_vs_uniform_disk(&projected, &params.kernel)?;
    Ok(Some(LocalScore {
        k_obs: nb.len(),
        d_hat: pca.d_hat,
        mmd,
    }))
}

fn neighborhood_size(cloud: &PointCloud, i: usize, rule: NeighborhoodRule) -> usize {
    match rule {
        NeighborhoodRule::Radius(r) => {
            let x = cloud.row(i);
            let r2 = r * r;
            cloud
                .rows()
                .enumerate()
                .filter(|&(j, y)| j != i && sq_dist(x, y) < r2)
                .count()
        }
        NeighborhoodRule::Knn(k) => k.min(cloud.len().saturating_sub(1)),
    }
}

/// Runs the uniformity test at point `i`.
///
/// Neighborhoods with fewer than ten members (or whose members all coincide
/// with the query point) yield a result with the score fields missing.
pub fn uniformity_test(
    cloud: &PointCloud,
    i: usize,
    params: &Hyperparams,
    nulls: &NullCache,
) -> Result<UniformityResult> {
    params.validate()?;
    if i >= cloud.len() {
        return Err(Error::InvalidParameter(format!("index {i} out of range")));
    }
    match local_score(cloud, i, params)? {
        Some(s) => {
            let table = nulls.get(s.d_hat, &params.kernel)?;
            Ok(UniformityResult {
                index: i,
                d_hat: Some(s.d_hat),
                k_obs: s.k_obs,
                mmd: Some(s.mmd),
                p_value: Some(table.p_value(s.k_obs, s.mmd)),
            })
        }
        None => Ok(UniformityResult::missing(i, neighborhood_size(cloud, i, params.neighborhood))),
    }
}

/// Indices scored when only `fraction` of the cloud is tested: a seeded
/// uniform subset, ascending. `fraction >= 1` selects everything.
pub fn subsample_indices(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0) || !fraction.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "subsample fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if fraction >= 1.0 {
        return Ok((0..n).collect());
    }
    let m = ((fraction * n as f64).ceil() as usize).clamp(1.min(n), n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Runs the uniformity test over the whole cloud (or a seeded subsample of
/// it) in parallel. Results are aligned with the input order; unscored
/// points inherit the result of their nearest scored point.
pub fn singularity_scores(
    cloud: &PointCloud,
    params: &Hyperparams,
    nulls: &NullCache,
    subsample_fraction: f64,
    seed: u64,
) -> Result<Vec<UniformityResult>> {
    params.validate()?;
    let n = cloud.len();
    let scored = subsample_indices(n, subsample_fraction, seed)?;

    let local: Vec<(usize, Option<LocalScore>)> = scored
        .par_iter()
        .map(|&i| local_score(cloud, i, params).map(|s| (i, s)))
        .collect::<Result<_>>()?;

    // Tables are fetched one dimension at a time, outside the parallel loop.
    let dims: BTreeSet<usize> = local.iter().filter_map(|(_, s)| s.map(|s| s.d_hat)).collect();
    let mut tables = std::collections::HashMap::new();
    for d in dims {
        tables.insert(d, nulls.get(d, &params.kernel)?);
    }

    let results: Vec<UniformityResult> = local
        .par_iter()
        .map(|&(i, s)| match s {
            Some(s) => UniformityResult {
                index: i,
                d_hat: Some(s.d_hat),
                k_obs: s.k_obs,
                mmd: Some(s.mmd),
                p_value: Some(tables[&s.d_hat].p_value(s.k_obs, s.mmd)),
            },
            None => UniformityResult::missing(i, neighborhood_size(cloud, i, params.neighborhood)),
        })
        .collect();

    if scored.len() == n {
        return Ok(results);
    }

    let mut is_scored = vec![usize::MAX; n];
    for (slot, &i) in scored.iter().enumerate() {
        is_scored[i] = slot;
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let slot = if is_scored[i] != usize::MAX {
                is_scored[i]
            } else {
                let x = cloud.row(i);
                let mut best = (f64::INFINITY, 0usize);
                for (slot, &j) in scored.iter().enumerate() {
                    let d = sq_dist(x, cloud.row(j));
                    if d < best.0 {
                        best = (d, slot);
                    }
                }
                best.1
            };
            UniformityResult {
                index: i,
                ..results[slot]
            }
        })
        .collect())
}
