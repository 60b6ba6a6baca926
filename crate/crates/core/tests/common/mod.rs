//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;
use strata::null::sample_uniform_ball;
use strata::{PointCloud, PowerSeriesKernel};

/// Gamma-function form of the disk moment coefficient.
pub fn beta_oracle(d: usize, k: usize) -> f64 {
    let h = d as f64 / 2.0;
    let k = k as f64;
    (ln_gamma(h + 1.0) + ln_gamma(k + 0.5) - ln_gamma(k + h + 1.0) - 0.5 * std::f64::consts::PI.ln()).exp()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Monte-Carlo quadrature of `||mu_hat - U||^2` in the kernel's RKHS:
/// the Gram part is exact, `E k(Y,Y') - (2/n) sum_i E k(x_i, Y)` is sampled
/// with independent `Y, Y' ~ unif_d`. Returns `(estimate, standard error)`.
pub fn mmd_quadrature(points: &PointCloud, kernel: &PowerSeriesKernel, draws: usize, seed: u64) -> (f64, f64) {
    let n = points.len();
    let d = points.dim();
    let mut gram = 0.0;
    for a in points.rows() {
        for b in points.rows() {
            gram += kernel.eval(dot(a, b).clamp(-1.0, 1.0)).unwrap();
        }
    }
    gram /= (n * n) as f64;
    let chunks = 64usize;
    let per = draws / chunks;
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let ys = sample_uniform_ball(d, 2 * per, &mut rng);
            let (mut s, mut s2) = (0.0, 0.0);
            for t in 0..per {
                let y = ys.row(2 * t);
                let y2 = ys.row(2 * t + 1);
                let mut g = kernel.eval(dot(y, y2).clamp(-1.0, 1.0)).unwrap();
                let cross: f64 = points.rows().map(|x| kernel.eval(dot(x, y).clamp(-1.0, 1.0)).unwrap()).sum();
                g -= 2.0 * cross / n as f64;
                s += g;
                s2 += g * g;
            }
            (s, s2)
        })
        .collect();
    let m = (per * chunks) as f64;
    let s: f64 = sums.iter().map(|p| p.0).sum();
    let s2: f64 = sums.iter().map(|p| p.1).sum();
    let mean = s / m;
    let var = (s2 / m - mean * mean) * m / (m - 1.0);
    (gram + mean, (var / m).sqrt())
}

/// Brute-force sup-distance between the empirical CDF and `U[0,1]`,
/// evaluated just below and at every sample point.
pub fn ks_oracle(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mut best: f64 = 0.0;
    for &t in values {
        let le = values.iter().filter(|&&v| v <= t).count() as f64 / n;
        let lt = values.iter().filter(|&&v| v < t).count() as f64 / n;
        best = best.max((le - t).abs()).max((lt - t).abs());
    }
    best
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = a.iter().chain(&b).copied().collect();
    all.sort_by(f64::total_cmp);
    all.iter()
        .map(|&t| {
            let fa = a.partition_point(|&v| v <= t) as f64 / a.len() as f64;
            let fb = b.partition_point(|&v| v <= t) as f64 / b.len() as f64;
            (fa - fb).abs()
        })
        .fold(0.0, f64::max)
}

/// Pairwise Mann-Whitney AUC, O(n^2).
pub fn auc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (s1, _) in scores.iter().zip(labels).filter(|p| *p.1 == 1) {
        for (s0, _) in scores.iter().zip(labels).filter(|p| *p.1 == 0) {
            den += 1.0;
            num += if s1 > s0 {
                1.0
            } else if s1 == s0 {
                0.5
            } else {
                0.0
            };
        }
    }
    num / den
}

pub fn uniform_values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| 1.0 - rng.random::<f64>()).collect()
}

/// Random orthogonal `dim x dim` matrix (row-major) by Gram-Schmidt.
pub fn random_rotation(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        for r in &rows {
            let p = dot(&v, r);
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= p * b);
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            rows.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    rows.concat()
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}
