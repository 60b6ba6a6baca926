//! ROC curves and the synthetic detection benchmark.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::null::NullCache;
use crate::synth::{generate, labels_within, scaled_experiment_params, Shape, ShapeSpec};
use crate::uniformity::{singularity_scores, Hyperparams};

/// `thresholds[0]` is `+inf`, so the curve starts at `(0, 0)` and ends at
/// `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
    pub n_missing: usize,
}

impl RocCurve {
    /// Polyline as CSV with header `fpr,tpr`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fpr,tpr\n");
        for (f, t) in self.fpr.iter().zip(&self.tpr) {
            let _ = writeln!(s, "{f},{t}");
        }
        s
    }
}

/// Threshold sweep over the distinct score values, highest first. Points with
/// a missing score are dropped and counted.
pub fn roc_curve(scores: &[Option<f64>], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = labels.iter().position(|&y| y > 1) {
        return Err(Error::InvalidParameter(format!("label at row {i} is not 0 or 1")));
    }
    let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(scores.len());
    let mut n_missing = 0;
    for (s, &y) in scores.iter().zip(labels) {
        match s {
            Some(v) if v.is_nan() => return Err(Error::NonFinite("NaN score".into())),
            Some(v) => pairs.push((*v, y)),
            None => n_missing += 1,
        }
    }
    let pos = pairs.iter().filter(|p| p.1 == 1).count();
    let neg = pairs.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::AucUndefined);
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut thresholds = vec![f64::INFINITY];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let t = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == t {
            if pairs[i].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (f, r) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        let (f0, r0) = (*fpr.last().unwrap(), *tpr.last().unwrap());
        auc += (f - f0) * (r + r0) / 2.0;
        thresholds.push(t);
        fpr.push(f);
        tpr.push(r);
    }
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        auc,
        n_missing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteFamily {
    SolidBall,
    TwoSpheres,
    TwoDisks,
}

impl SuiteFamily {
    /// `(r0, n0, growth)` of the dimension-scaled experiment.
    pub fn base_params(self) -> (f64, f64, f64) {
        match self {
            SuiteFamily::SolidBall => (0.02, 15000.0, 1.5),
            SuiteFamily::TwoDisks => (0.1, 15000.0, 1.5),
            SuiteFamily::TwoSpheres => (0.03, 15000.0, 1.5),
        }
    }

    pub fn shape(self, d: usize) -> Shape {
        match self {
            SuiteFamily::SolidBall => Shape::SolidBall(d),
            SuiteFamily::TwoSpheres => Shape::TwoSpheres(d),
            SuiteFamily::TwoDisks => Shape::TwoDisks(d),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SuiteFamily::SolidBall => "solid_ball",
            SuiteFamily::TwoSpheres => "two_spheres",
            SuiteFamily::TwoDisks => "two_disks",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    /// Multiplies every sample size; 1 is the full-size experiment.
    pub scale: f64,
    pub eta: f64,
    pub alpha: f64,
    pub noise_amplitude: f64,
    pub seed: u64,
}

/// Noise used by the scaled suite. At the smallest radii the default
/// generator noise fattens curves enough to flip the local dimension
/// estimate, so the suite runs closer to the noiseless geometry.
pub const SUITE_NOISE: f64 = 0.001;

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            scale: 0.2,
            eta: 0.95,
            alpha: 0.7,
            noise_amplitude: SUITE_NOISE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub family: SuiteFamily,
    pub d: usize,
    pub n: usize,
    pub r: f64,
    pub auc: f64,
    pub seconds: f64,
}

/// Scores each dimension at the family's scaled radius and compares
/// `log(1/p)` against ground truth at `r / 2`. Cells run one after another
/// so that each timing reflects a full machine.
pub fn run_synthetic_suite(
    family: SuiteFamily,
    d_list: &[usize],
    opts: &SuiteOptions,
    nulls: &NullCache,
) -> Result<Vec<SuiteRow>> {
    if !(opts.scale > 0.0 && opts.scale <= 1.0) {
        return Err(Error::InvalidParameter(format!("scale must lie in (0,1], got {}", opts.scale)));
    }
    let (r0, n0, growth) = family.base_params();
    let mut rows = Vec::with_capacity(d_list.len());
    for &d in d_list {
        let (r, n_full) = scaled_experiment_params(d, r0, n0, growth)?;
        let n = ((n_full as f64 * opts.scale).round() as usize).max(1);
        let labeled = generate(&ShapeSpec {
            shape: family.shape(d),
            n,
            noise_amplitude: opts.noise_amplitude,
            seed: opts.seed ^ (d as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        })?;
        let params = Hyperparams::radius(r, opts.eta, opts.alpha)?;
        let start = Instant::now();
        let res = singularity_scores(&labeled.cloud, &params, nulls, 1.0, opts.seed)?;
        let seconds = start.elapsed().as_secs_f64();
        let scores: Vec<Option<f64>> = res.iter().map(|u| u.p_value.map(|p| -p.ln())).collect();
        let truth = labels_within(&labeled.dist_to_singular, r / 2.0)?;
        let roc = roc_curve(&scores, &truth)?;
        log::info!(
            "{} d={d} n={n} r={r:.4}: auc={:.4} ({} unscored) in {seconds:.2}s",
            family.name(),
            roc.auc,
            roc.n_missing
        );
        rows.push(SuiteRow {
            family,
            d,
            n,
            r,
            auc: roc.auc,
            seconds,
        });
    }
    Ok(rows)
}

/// Suite table as CSV: `family,d,n,r,auc,seconds`.
pub fn suite_csv(rows: &[SuiteRow]) -> String {
    let mut s = String::from("family,d,n,r,auc,seconds\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.family.name(), r.d, r.n, r.r, r.auc, r.seconds);
    }
    s
}
