mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use strata::manifold_test::*;
use strata::mmd::PowerSeriesKernel;
use strata::scoring::*;
use strata::{NullCache, PointCloud};

#[test]
fn kde_recovers_normal_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
    let (grid, dens) = kde_density(&v, KDE_GRID_SIZE).unwrap();
    let at0 = grid
        .iter()
        .zip(&dens)
        .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .unwrap()
        .1;
    let want = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    assert!((at0 - want).abs() <= 0.15 * want, "{at0}");
    let integral: f64 = grid.windows(2).zip(dens.windows(2)).map(|(g, d)| (g[1] - g[0]) * (d[0] + d[1]) / 2.0).sum();
    assert!((integral - 1.0).abs() <= 0.01, "{integral}");
    assert!(dens.iter().all(|&d| d >= 0.0));
}

#[test]
fn kde_of_symmetric_data_is_symmetric() {
    let v: Vec<f64> = (0..200).map(|i| ((i as f64) * 0.37).sin()).flat_map(|x| [x, -x]).collect();
    let (_, dens) = kde_density(&v, 201).unwrap();
    for i in 0..dens.len() {
        assert!((dens[i] - dens[dens.len() - 1 - i]).abs() < 1e-9);
    }
}

/// Largest gap of the normalized curve above the diagonal, by direct scan.
fn brute_knee(xs: &[f64], ys: &[f64]) -> f64 {
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let (y0, y1) = (ys[0], ys[ys.len() - 1]);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let g = (y - y0) / (y1 - y0) - (x - x0) / (x1 - x0);
        if g > best.0 {
            best = (g, *x);
        }
    }
    best.1
}

#[test]
fn knee_of_saturating_exponential() {
    let xs: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 1.0 - (-5.0 * x).exp()).collect();
    let got = knee_detect(&xs, &ys, 1.0, CurveShape::ConcaveInc).unwrap();
    let want = brute_knee(&xs, &ys);
    assert!((got - want).abs() <= 0.05, "{got} vs {want}");
    assert!((got - 0.32).abs() <= 0.05);
    let line: Vec<f64> = xs.clone();
    assert_eq!(knee_detect(&xs, &line, 1.0, CurveShape::ConcaveInc), None);
    assert_eq!(knee_detect(&xs, &ys, 1e9, CurveShape::ConcaveInc), None);
}

#[test]
fn uniform_p_values_are_mostly_unlabeled() {
    let total: usize = (0..20)
        .map(|seed| {
            let p: Vec<Option<f64>> = uniform_values(1000, seed).into_iter().map(Some).collect();
            filter_labels(&p).unwrap().iter().filter(|&&y| y == 1).count()
        })
        .sum();
    assert!(total <= 20 * 100, "{total} of 20000 labeled");
}

// Uniform draws beyond the cut (p below ~1e-3) are labeled with the atom in
// about half the seeds; see `mixture_atom_is_always_labeled`.
#[test]
#[ignore = "exact recovery fails whenever a uniform draw lands past the knee"]
fn mixture_atom_is_labeled_exactly() {
    for seed in 0..5 {
        let mut p: Vec<Option<f64>> = uniform_values(900, seed).into_iter().map(Some).collect();
        p.extend(std::iter::repeat_n(Some(1e-12), 100));
        let y = filter_labels(&p).unwrap();
        assert!(y[..900].iter().all(|&v| v == 0), "seed {seed}");
        assert!(y[900..].iter().all(|&v| v == 1), "seed {seed}");
    }
}

#[test]
fn mixture_atom_is_always_labeled() {
    for seed in 0..20 {
        let mut p: Vec<Option<f64>> = uniform_values(900, seed).into_iter().map(Some).collect();
        p.extend(std::iter::repeat_n(Some(1e-12), 100));
        let y = filter_labels(&p).unwrap();
        assert!(y[900..].iter().all(|&v| v == 1), "seed {seed}");
        let stray = y[..900].iter().filter(|&&v| v == 1).count();
        // Only draws with p < 1e-3 can pass the cut.
        assert!(stray <= 5, "seed {seed}: {stray}");
        for (v, l) in p[..900].iter().zip(&y) {
            assert!(*l == 0 || v.unwrap() < 1e-3);
        }
    }
}

#[test]
fn missing_values_are_labeled_zero() {
    let mut p: Vec<Option<f64>> = uniform_values(300, 3).into_iter().map(Some).collect();
    p.extend(std::iter::repeat_n(Some(1e-12), 30));
    p.push(None);
    let y = filter_labels(&p).unwrap();
    assert_eq!(y[330], 0);
    assert!(filter_labels(&[Some(0.5); 9]).is_err());
}

fn line_cloud() -> PointCloud {
    PointCloud::from_rows(&[[-2.0], [-1.0], [0.0], [1.0], [2.0]]).unwrap()
}

#[test]
fn separation_by_hand() {
    let c = line_cloud();
    let all: Vec<Vec<usize>> = (0..5).map(|i| {
        let mut s = vec![i];
        s.extend((0..5).filter(|&j| j != i));
        s
    }).collect();
    // Ones at +1, +2: direction +1, t = x, perfect ordering.
    let s = separation(&c, &[0, 0, 0, 1, 1], &all);
    assert_eq!(s[2], 1.0);
    // Ones at -2, +1: direction -1, t = (2, 1, 0, -1, -2) with labels
    // (1, 0, 0, 1, 0). Positives {2, -1} beat negatives {1, 0, -2} in 4 of
    // 6 pairs.
    let s = separation(&c, &[1, 0, 0, 1, 0], &all);
    assert!((s[2] - 4.0 / 6.0).abs() < 1e-12);
    // Opposite ones cancel: no direction.
    let s = separation(&c, &[0, 1, 0, 1, 0], &all);
    assert_eq!(s[2], 0.5);
}

// The axis is the summed offset to the labeled neighbors, so those
// neighbors project positively on average and random labels score ~0.65.
#[test]
#[ignore = "separation of random labels is biased above one half by construction"]
fn separation_of_random_labels_averages_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<[f64; 2]> = (0..3000).map(|_| [rng.random(), rng.random()]).collect();
    let c = PointCloud::from_rows(&rows).unwrap();
    let y: Vec<u8> = (0..3000).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
    let sets = knn_neighbor_sets(&c, DEFAULT_K_DISP);
    let s = separation(&c, &y, &sets);
    let m = s.iter().sum::<f64>() / s.len() as f64;
    assert!((m - 0.5).abs() < 0.03, "{m}");
}

#[test]
fn random_labels_separate_worse_than_a_band() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<[f64; 2]> = (0..3000).map(|_| [rng.random(), rng.random()]).collect();
    let c = PointCloud::from_rows(&rows).unwrap();
    let sets = knn_neighbor_sets(&c, DEFAULT_K_DISP);
    let random: Vec<u8> = (0..3000).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
    let half: Vec<u8> = rows.iter().map(|r| u8::from(r[0] < 0.3)).collect();
    // Mean over labeled points whose neighborhood holds both classes.
    let mean_on_ones = |y: &[u8]| {
        let s = separation(&c, y, &sets);
        let mixed = |i: usize| sets[i].iter().any(|&j| y[j] == 0);
        let v: Vec<f64> = (0..y.len()).filter(|&i| y[i] == 1 && mixed(i)).map(|i| s[i]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (r, h) = (mean_on_ones(&random), mean_on_ones(&half));
    assert!(r < 0.7 && h > 0.85, "random {r}, half-plane {h}");
}

#[test]
fn band_labeling_beats_random_labeling() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f64; 2]> = (0..2000).map(|_| [rng.random(), rng.random()]).collect();
        let c = PointCloud::from_rows(&rows).unwrap();
        let band: Vec<u8> = rows.iter().map(|r| u8::from((r[0] - 0.5).abs() < 0.03)).collect();
        let ones = band.iter().filter(|&&y| y == 1).count();
        let mut random = vec![0u8; 2000];
        for i in rand::seq::index::sample(&mut rng, 2000, ones) {
            random[i] = 1;
        }
        let sets = knn_neighbor_sets(&c, DEFAULT_K_DISP);
        let a = default_alpha_reg(2000);
        let (d1, d2) = (DampingFunction::purity_default(), DampingFunction::point_default());
        let db = dispersion(&c, &band, &sets, a, d1, d2).unwrap().dispersion;
        let dr = dispersion(&c, &random, &sets, a, d1, d2).unwrap().dispersion;
        assert!(db < dr, "seed {seed}: band {db} random {dr}");
    }
}

#[test]
fn all_ones_dispersion_is_alpha_reg() {
    let c = line_cloud();
    let sets = knn_neighbor_sets(&c, 3);
    let r = dispersion(&c, &[1; 5], &sets, 7.5, DampingFunction::purity_default(), DampingFunction::point_default())
        .unwrap();
    assert_eq!(r.dispersion, 7.5);
    assert!(r.purity.iter().all(|&p| p == 1.0));
}

#[test]
fn supc_examples() {
    assert_eq!(supc(&[1.0; 10], &[0.01]).unwrap(), 0.0);
    assert!((supc(&[0.001; 10], &[0.01]).unwrap() - 100.0).abs() < 1e-9);
    let n = 10_000;
    let grid: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
    assert!((supc(&grid, &DEFAULT_SUPC_THRESHOLDS).unwrap() - 1.0).abs() <= 0.15);
}

#[test]
fn ks_examples() {
    for n in [1, 7, 1000] {
        let grid: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let (d, _) = ks_uniform(&grid).unwrap();
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }
    assert_eq!(ks_uniform(&[0.0; 5]).unwrap().0, 1.0);
    let v = uniform_values(500, 2);
    assert!((ks_uniform(&v).unwrap().0 - ks_oracle(&v)).abs() < 1e-12);
}

#[test]
fn kolmogorov_survival_reference_values() {
    // Standard critical values of the limiting distribution.
    assert!((kolmogorov_survival(1.358) - 0.05).abs() < 5e-4);
    assert!((kolmogorov_survival(1.628) - 0.01).abs() < 2e-4);
    assert!((kolmogorov_survival(1.224) - 0.10).abs() < 5e-4);
}

#[test]
fn ks_p_values_are_uniform_under_the_null() {
    let p: Vec<f64> = (0..200).map(|s| ks_uniform(&uniform_values(10_000, 500 + s)).unwrap().1).collect();
    assert!(ks_oracle(&p) <= 0.115, "{}", ks_oracle(&p));
}

#[test]
fn upup_is_calibrated() {
    let k = PowerSeriesKernel::default();
    let nulls = NullCache::in_memory(0);
    let p: Vec<f64> = (0..100).map(|s| upup(&uniform_values(1000, 900 + s), &k, &nulls).unwrap().1).collect();
    let m = p.iter().sum::<f64>() / p.len() as f64;
    assert!((m - 0.5).abs() <= 0.1, "{m}");
}

#[test]
fn upup_detects_a_spike_at_zero() {
    let k = PowerSeriesKernel::default();
    let nulls = NullCache::in_memory(0);
    let hits = (0..20)
        .filter(|&s| {
            let mut v = uniform_values(700, 40 + s);
            v.extend(std::iter::repeat_n(1e-6, 300));
            upup(&v, &k, &nulls).unwrap().1 < 0.01
        })
        .count();
    assert!(hits >= 19, "{hits}/20");
}

#[test]
fn upup_of_a_single_atom() {
    let alpha = 0.5;
    let k = PowerSeriesKernel::geometric(alpha).unwrap();
    let nulls = NullCache::in_memory(0);
    let n = 200;
    let (stat, _) = upup(&vec![0.5; n], &k, &nulls).unwrap();
    // Point mass at the centre of the 1-disk: only even moments survive.
    let series: f64 = (1..200)
        .map(|j| alpha.powi(2 * j as i32) * beta_oracle(1, j) / (1.0 + 2.0 * j as f64))
        .sum();
    assert!((stat - n as f64 * series).abs() < 1e-9 * n as f64, "{stat}");
    assert!(upup(&[0.5; 49], &k, &nulls).is_err());
}

#[test]
fn report_skips_missing_values() {
    let k = PowerSeriesKernel::default();
    let nulls = NullCache::in_memory(0);
    let mut p: Vec<Option<f64>> = uniform_values(100, 5).into_iter().map(Some).collect();
    p.extend([None, None]);
    let r = mh_report(&p, &DEFAULT_SUPC_THRESHOLDS, &k, &nulls).unwrap();
    assert_eq!(r.n_used, 100);
    assert!(r.upup_p.is_some());
    let short: Vec<Option<f64>> = p[..20].to_vec();
    assert!(mh_report(&short, &DEFAULT_SUPC_THRESHOLDS, &k, &nulls).unwrap().upup_p.is_none());
}
