//! Power-series kernels and the closed-form squared MMD between a discrete
//! measure and the uniform distribution on the unit d-disk.
//!
//! For a kernel `k(x, y) = sum_k a_k <x, y>^k` with nonnegative
//! coefficients, the uniform-disk terms of the MMD reduce to a single series
//! in the even coefficients:
//!
//! ```text
//! MMD^2 = (1/n^2) sum_ij k(x_i, x_j)
//!       + sum_k a_{2k} beta(d, k) (d / (d + 2k) - (2/n) sum_i |x_i|^{2k})
//!
//! beta(d, k) = Gamma(d/2 + 1) Gamma(k + 1/2) / (sqrt(pi) Gamma(k + d/2 + 1))
//! ```
//!
//! The Gram term is evaluated with the kernel's closed form; only the
//! beta-series is truncated.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geometry::{dot, PointCloud};

pub const DEFAULT_TRUNCATION: usize = 32;

/// Rows may exceed the unit norm by this much (rescaling round-off).
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Negative MMD^2 values down to this are treated as round-off and clamped.
const NEGATIVE_CLAMP: f64 = -1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// `a_k = alpha^k`, closed form `1 / (1 - alpha t)`.
    Geometric { alpha: f64 },
    /// `a_k = gamma^k / k!`, closed form `exp(gamma t)`.
    ExpDot { gamma: f64 },
}

/// A dot-product kernel with nonnegative power-series coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSeriesKernel {
    pub kind: KernelKind,
    /// Highest `k` kept in the beta-series (terms `0..=truncation`).
    pub truncation: usize,
}

impl PowerSeriesKernel {
    /// Geometric kernel. `alpha = 0` is accepted and yields the constant
    /// kernel.
    pub fn geometric(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "geometric kernel needs alpha in [0, 1), got {alpha}"
            )));
        }
        Ok(Self {
            kind: KernelKind::Geometric { alpha },
            truncation: DEFAULT_TRUNCATION,
        })
    }

    pub fn exp_dot(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "exp-dot kernel needs gamma > 0, got {gamma}"
            )));
        }
        Ok(Self {
            kind: KernelKind::ExpDot { gamma },
            truncation: DEFAULT_TRUNCATION,
        })
    }

    pub fn with_truncation(mut self, truncation: usize) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn parameter(&self) -> f64 {
        match self.kind {
            KernelKind::Geometric { alpha } => alpha,
            KernelKind::ExpDot { gamma } => gamma,
        }
    }

    pub fn kind_tag(&self) -> &'static str {
        match self.kind {
            KernelKind::Geometric { .. } => "geo",
            KernelKind::ExpDot { .. } => "exp",
        }
    }

    /// Kind and parameter rounded to 1e-6, e.g. `geo0.500000`.
    pub fn fingerprint(&self) -> String {
        format!("{}{:.6}", self.kind_tag(), self.parameter())
    }

    /// Power-series coefficient `a_k`.
    pub fn coefficient(&self, k: usize) -> f64 {
        match self.kind {
            KernelKind::Geometric { alpha } => {
                if k == 0 {
                    1.0
                } else {
                    alpha.powi(k as i32)
                }
            }
            KernelKind::ExpDot { gamma } => {
                if k == 0 {
                    1.0
                } else {
                    (k as f64 * gamma.ln() - ln_gamma(k as f64 + 1.0)).exp()
                }
            }
        }
    }

    /// Closed-form kernel value at inner product `t`, clamped to `[-1, 1]`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("inner product {t}")));
        }
        Ok(self.eval_clamped(t))
    }

    #[inline]
    pub(crate) fn eval_clamped(&self, t: f64) -> f64 {
        let t = t.clamp(-1.0, 1.0);
        match self.kind {
            KernelKind::Geometric { alpha } => 1.0 / (1.0 - alpha * t),
            KernelKind::ExpDot { gamma } => (gamma * t).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            KernelKind::Geometric { alpha } if !(0.0..1.0).contains(&alpha) => Err(
                Error::InvalidParameter(format!("geometric kernel needs alpha in [0, 1), got {alpha}")),
            ),
            KernelKind::ExpDot { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(
                Error::InvalidParameter(format!("exp-dot kernel needs gamma > 0, got {gamma}")),
            ),
            _ => Ok(()),
        }
    }
}

impl Default for PowerSeriesKernel {
    fn default() -> Self {
        Self {
            kind: KernelKind::Geometric { alpha: 0.5 },
            truncation: DEFAULT_TRUNCATION,
        }
    }
}

/// `beta(d, k) = Gamma(d/2+1) Gamma(k+1/2) / (sqrt(pi) Gamma(k+d/2+1))`, by
/// the product recurrence from `beta(d, 0) = 1`.
pub fn beta_coeff(d: usize, k: usize) -> f64 {
    assert!(d >= 1, "disk dimension must be >= 1");
    let half_d = d as f64 / 2.0;
    (0..k).fold(1.0, |b, j| b * (j as f64 + 0.5) / (j as f64 + half_d + 1.0))
}

/// Table of `a_{2k} * beta(d, k)` for `k = 0..=truncation`.
pub(crate) fn even_weights(kernel: &PowerSeriesKernel, d: usize) -> Vec<f64> {
    (0..=kernel.truncation)
        .map(|k| kernel.coefficient(2 * k) * beta_coeff(d, k))
        .collect()
}

/// Truncated `E_{X,Y ~ unif_d} k(X, Y) = sum_k a_{2k} beta(d,k) d/(d+2k)`.
pub fn uniform_pair_expectation(kernel: &PowerSeriesKernel, d: usize) -> f64 {
    let df = d as f64;
    even_weights(kernel, d)
        .iter()
        .enumerate()
        .map(|(k, w)| w * df / (df + 2.0 * k as f64))
        .sum()
}

/// Squared MMD between the empirical measure of `points` (rows in the unit
/// ball of `R^d`) and the uniform distribution on the unit d-disk.
pub fn mmd_sq_vs_uniform_disk(points: &PointCloud, kernel: &PowerSeriesKernel) -> Result<f64> {
    kernel.validate()?;
    let weights = even_weights(kernel, points.dim());
    mmd_sq_with_weights(points, kernel, &weights)
}

/// Same as [`mmd_sq_vs_uniform_disk`] with precomputed beta-series weights
/// (from [`even_weights`] for this kernel and `points.dim()`).
pub(crate) fn mmd_sq_with_weights(
    points: &PointCloud,
    kernel: &PowerSeriesKernel,
    weights: &[f64],
) -> Result<f64> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let d = points.dim() as f64;
    let mut sq_norms = Vec::with_capacity(n);
    for (i, row) in points.rows().enumerate() {
        let s = dot(row, row);
        if s.sqrt() > 1.0 + NORM_TOLERANCE {
            return Err(Error::NotRescaled {
                row: i,
                norm: s.sqrt(),
            });
        }
        sq_norms.push(s.min(1.0));
    }

    let mut gram = 0.0;
    for i in 0..n {
        let xi = points.row(i);
        let mut off = 0.0;
        for j in (i + 1)..n {
            off += kernel.eval_clamped(dot(xi, points.row(j)));
        }
        gram += 2.0 * off + kernel.eval_clamped(sq_norms[i]);
    }
    let gram = gram / (n as f64 * n as f64);

    // Power sums sum_i |x_i|^{2k}, k = 0..=K.
    let mut powers = vec![1.0; n];
    let mut series = 0.0;
    for (k, w) in weights.iter().enumerate() {
        let power_mean = if k == 0 {
            1.0
        } else {
            let mut s = 0.0;
            for (p, &r2) in powers.iter_mut().zip(&sq_norms) {
                *p *= r2;
                s += *p;
            }
            s / n as f64
        };
        series += w * (d / (d + 2.0 * k as f64) - 2.0 * power_mean);
    }

    clamp_nonnegative(gram + series)
}

fn clamp_nonnegative(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= NEGATIVE_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::Internal(format!("squared MMD evaluated to {v:e}")))
    }
}

/// Expected squared MMD of an i.i.d. size-`n` sample from `unif_d`:
/// `(E k(X, X) - E k(X, Y)) / n`.
///
/// Both expectations are summed to convergence rather than at the kernel's
/// truncation order: `E |X|^{2k} = d / (d + 2k)` for `X ~ unif_d`.
pub fn expected_mmd_sq(kernel: &PowerSeriesKernel, d: usize, n: usize) -> f64 {
    assert!(d >= 1 && n >= 1);
    let df = d as f64;
    let mut diag = 0.0;
    let mut pair = 0.0;
    for k in 0..100_000usize {
        let kf = k as f64;
        let a = kernel.coefficient(k);
        let diag_term = a * df / (df + 2.0 * kf);
        diag += diag_term;
        let pair_term = if k % 2 == 0 {
            let j = k / 2;
            a * beta_coeff(d, j) * df / (df + 2.0 * j as f64)
        } else {
            0.0
        };
        pair += pair_term;
        if k > 4 && diag_term <= 1e-18 * diag {
            break;
        }
    }
    (diag - pair).max(0.0) / n as f64
}
