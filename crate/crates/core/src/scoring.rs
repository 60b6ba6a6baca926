//! Turning p-values into binary labels, and judging a labeling.
//!
//! Filtering looks at the density of `log(1/p)`: smooth points pile up near
//! zero, so the labels are cut at the knee of the density's decreasing
//! flank. A labeling is then rated by the dispersion score, which combines
//! local purity (how many neighbors share label 1) with local separation (an
//! AUC of labels along the direction towards the labeled neighbors).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, nearest_sorted, PointCloud};

pub const KDE_GRID_SIZE: usize = 512;
pub const KNEE_SENSITIVITY: f64 = 1.0;
pub const DEFAULT_K_DISP: usize = 20;

/// Clamped power ramp `F_{a,b}(t) = max(0, (t - a) / (1 - a))^b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingFunction {
    pub a: f64,
    pub b: f64,
}

impl DampingFunction {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&a) || !(b >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping needs a in [0,1) and b >= 1, got a={a}, b={b}"
            )));
        }
        Ok(Self { a, b })
    }

    /// Default global-purity damping `F_{0,2}`.
    pub fn purity_default() -> Self {
        Self { a: 0.0, b: 2.0 }
    }

    /// Default per-point damping `F_{0.5,5}`.
    pub fn point_default() -> Self {
        Self { a: 0.5, b: 5.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        ((t - self.a) / (1.0 - self.a)).max(0.0).powf(self.b)
    }
}

pub fn log_inv_p(p_values: &[Option<f64>]) -> Vec<Option<f64>> {
    p_values.iter().map(|p| p.map(|p| -p.ln())).collect()
}

/// Gaussian KDE with Silverman's bandwidth `1.06 * sd * n^(-1/5)` on a
/// uniform grid spanning `[min - h, max + h]`.
pub fn kde_density(values: &[f64], grid_size: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.len() < 2 {
        return Err(Error::InvalidParameter("KDE needs at least two values".into()));
    }
    if grid_size < 2 {
        return Err(Error::InvalidParameter("KDE grid needs at least two points".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("KDE input".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateValues);
    }
    let h = 1.06 * sd * n.powf(-0.2);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + h;
    let step = (hi - lo) / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|i| lo + step * i as f64).collect();
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .par_iter()
        .map(|&g| {
            values
                .iter()
                .map(|&v| {
                    let z = (g - v) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok((grid, density))
}

/// Curve shapes understood by [`knee_detect`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveShape {
    ConcaveInc,
    ConvexDec,
    ConvexInc,
    ConcaveDec,
}

/// Kneedle knee detection.
///
/// Both axes are min-max normalized and the curve is reflected so it
/// becomes concave increasing; the knee is the point of largest gap above
/// the diagonal, accepted only if the gap later falls below
/// `max_gap - sensitivity * mean_x_spacing`.
pub fn knee_detect(xs: &[f64], ys: &[f64], sensitivity: f64, shape: CurveShape) -> Option<f64> {
    let n = xs.len();
    if n < 5 || ys.len() != n {
        return None;
    }
    let (x_lo, x_hi) = min_max(xs);
    let (y_lo, y_hi) = min_max(ys);
    if !(x_hi > x_lo) || !(y_hi > y_lo) {
        return None;
    }
    let xn: Vec<f64> = xs.iter().map(|x| (x - x_lo) / (x_hi - x_lo)).collect();
    let yn: Vec<f64> = ys.iter().map(|y| (y - y_lo) / (y_hi - y_lo)).collect();

    // (u, v, original index), ordered by u ascending
    let mut pts: Vec<(f64, f64, usize)> = (0..n)
        .map(|i| match shape {
            CurveShape::ConcaveInc => (xn[i], yn[i], i),
            CurveShape::ConvexDec => (xn[i], 1.0 - yn[i], i),
            CurveShape::ConvexInc => (1.0 - xn[i], 1.0 - yn[i], i),
            CurveShape::ConcaveDec => (1.0 - xn[i], yn[i], i),
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));

    let diff: Vec<f64> = pts.iter().map(|p| p.1 - p.0).collect();
    let (m, &best) = diff
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))?;
    if !(best > 1e-12) {
        return None;
    }
    let spacing = pts.windows(2).map(|w| w[1].0 - w[0].0).sum::<f64>() / (n - 1) as f64;
    let threshold = best - sensitivity * spacing;
    if diff[m + 1..].iter().any(|&v| v < threshold) {
        Some(xs[pts[m].2])
    } else {
        None
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Cut point in `log(1/p)` above which points are labeled singular, or
/// `None` when the density shows no knee.
pub fn filter_threshold(scores: &[f64]) -> Result<Option<f64>> {
    let (grid, density) = match kde_density(scores, KDE_GRID_SIZE) {
        Ok(v) => v,
        Err(Error::DegenerateValues) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mode = density
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(knee_detect(
        &grid[mode..],
        &density[mode..],
        KNEE_SENSITIVITY,
        CurveShape::ConvexDec,
    ))
}

/// Binary labels from p-values: 1 for points whose `log(1/p)` lies beyond
/// the knee. Missing p-values are excluded from the density and labeled 0.
pub fn filter_labels(p_values: &[Option<f64>]) -> Result<Vec<u8>> {
    let logs = log_inv_p(p_values);
    let scored: Vec<f64> = logs.iter().flatten().copied().collect();
    if scored.len() < 10 {
        return Err(Error::InvalidParameter(format!(
            "filtering needs at least 10 scored points, got {}",
            scored.len()
        )));
    }
    let cut = filter_threshold(&scored)?;
    Ok(logs
        .iter()
        .map(|l| match (l, cut) {
            (Some(l), Some(c)) if *l > c => 1,
            _ => 0,
        })
        .collect())
}

/// `k`-nearest neighbor sets including the point itself (so each set has
/// `min(k, n)` members, self first).
pub fn knn_neighbor_sets(cloud: &PointCloud, k: usize) -> Vec<Vec<usize>> {
    let k = k.max(1);
    (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let mut set = Vec::with_capacity(k);
            set.push(i);
            set.extend(nearest_sorted(cloud, i, k - 1).into_iter().map(|(_, j)| j));
            set
        })
        .collect()
}

/// Fraction of each neighbor set labeled 1.
pub fn purity(labels: &[u8], neighbor_sets: &[Vec<usize>]) -> Vec<f64> {
    neighbor_sets
        .iter()
        .map(|set| {
            let ones = set.iter().filter(|&&j| labels[j] == 1).count();
            ones as f64 / set.len() as f64
        })
        .collect()
}

/// Mann-Whitney AUC: probability a positive outscores a negative, ties
/// counting one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidParameter("scores and labels differ in length".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AucUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            if labels[o] == 1 {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Separation score of every point: the AUC of `(t_ij, y_j)` over its
/// neighbor set, with `t_ij` the displacement `x_j - x_i` projected on the
/// summed displacement towards labeled neighbors. Degenerate cases (no
/// direction, single class) score one half.
pub fn separation(points: &PointCloud, labels: &[u8], neighbor_sets: &[Vec<usize>]) -> Vec<f64> {
    let dim = points.dim();
    neighbor_sets
        .par_iter()
        .enumerate()
        .map(|(i, set)| {
            let xi = points.row(i);
            let mut dir = vec![0.0; dim];
            for &j in set.iter().filter(|&&j| labels[j] == 1) {
                for ((o, a), b) in dir.iter_mut().zip(points.row(j)).zip(xi) {
                    *o += a - b;
                }
            }
            let len = dot(&dir, &dir).sqrt();
            if !(len > 0.0) {
                return 0.5;
            }
            let t: Vec<f64> = set
                .iter()
                .map(|&j| {
                    points
                        .row(j)
                        .iter()
                        .zip(xi)
                        .zip(&dir)
                        .map(|((a, b), u)| (a - b) * u)
                        .sum::<f64>()
                        / len
                })
                .collect();
            let y: Vec<u8> = set.iter().map(|&j| labels[j]).collect();
            roc_auc(&t, &y).unwrap_or(0.5)
        })
        .collect()
}

/// Quality of a labeling; lower is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    pub labels: Vec<u8>,
    pub global_purity: f64,
    /// Per-point purity `p_i`, separation `s_i` and `q_i = 1 - (s_i + p_i)/2`.
    /// Only entries with label 1 enter the dispersion.
    pub purity: Vec<f64>,
    pub separation: Vec<f64>,
    pub q: Vec<f64>,
    pub dispersion: f64,
}

impl DispersionReport {
    pub fn n_singular(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }
}

/// `alpha_reg * D1(P) + sum_{i labeled 1} D2(q_i)`.
pub fn dispersion(
    points: &PointCloud,
    labels: &[u8],
    neighbor_sets: &[Vec<usize>],
    alpha_reg: f64,
    d1: DampingFunction,
    d2: DampingFunction,
) -> Result<DispersionReport> {
    let n = points.len();
    if labels.len() != n || neighbor_sets.len() != n {
        return Err(Error::InvalidParameter("labels / neighbor sets do not match the cloud".into()));
    }
    if let Some(i) = neighbor_sets
        .iter()
        .enumerate()
        .position(|(i, s)| !s.contains(&i))
    {
        return Err(Error::InvalidParameter(format!("neighbor set {i} does not contain its point")));
    }
    let p = purity(labels, neighbor_sets);
    let s = separation(points, labels, neighbor_sets);
    let q: Vec<f64> = p.iter().zip(&s).map(|(p, s)| 1.0 - 0.5 * (s + p)).collect();
    let ones = labels.iter().filter(|&&y| y == 1).count();
    let global = if n == 0 { 0.0 } else { ones as f64 / n as f64 };
    let point_sum: f64 = labels
        .iter()
        .zip(&q)
        .filter(|(y, _)| **y == 1)
        .map(|(_, q)| d2.eval(*q))
        .sum();
    Ok(DispersionReport {
        labels: labels.to_vec(),
        global_purity: global,
        purity: p,
        separation: s,
        q,
        dispersion: alpha_reg * d1.eval(global) + point_sum,
    })
}

/// Regularisation constant used when none is given: a quarter of the cloud
/// size.
pub fn default_alpha_reg(n: usize) -> f64 {
    n as f64 / 4.0
}
