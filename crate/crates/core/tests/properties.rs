mod common;

use common::*;
use proptest::prelude::*;
use strata::evaluation::roc_curve;
use strata::geometry::{local_pca, neighbors_radius, project};
use strata::manifold_test::{ks_uniform, supc, DEFAULT_SUPC_THRESHOLDS};
use strata::mmd::{mmd_sq_vs_uniform_disk, PowerSeriesKernel};
use strata::null::build_null;
use strata::scoring::*;
use strata::synth::{generate, labels_within, Shape, ShapeSpec};
use strata::uniformity::{singularity_scores, subsample_indices, Hyperparams};
use strata::{NullCache, PointCloud};

fn unit_interval() -> impl Strategy<Value = f64> {
    (1u32..=1_000_000).prop_map(|k| k as f64 / 1e6)
}

fn labeled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    prop::collection::vec((0u8..20, 0u8..=1), 2..120).prop_filter_map("both classes", |v| {
        let s: Vec<f64> = v.iter().map(|p| p.0 as f64 / 4.0).collect();
        let y: Vec<u8> = v.iter().map(|p| p.1).collect();
        (y.contains(&0) && y.contains(&1)).then_some((s, y))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_forms_agree((s, y) in labeled_scores()) {
        let want = auc_pairs(&s, &y);
        prop_assert!((roc_auc(&s, &y).unwrap() - want).abs() < 1e-12);
        let some: Vec<Option<f64>> = s.iter().copied().map(Some).collect();
        prop_assert!((roc_curve(&some, &y).unwrap().auc - want).abs() < 1e-12);
    }

    #[test]
    fn auc_ignores_increasing_transforms((s, y) in labeled_scores()) {
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        prop_assert_eq!(roc_auc(&s, &y).unwrap(), roc_auc(&t, &y).unwrap());
    }

    #[test]
    fn ks_grid_identity(n in 1usize..3000) {
        let grid: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let (d, _) = ks_uniform(&grid).unwrap();
        prop_assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn ks_matches_brute_force(v in prop::collection::vec(unit_interval(), 1..200)) {
        prop_assert!((ks_uniform(&v).unwrap().0 - ks_oracle(&v)).abs() < 1e-12);
    }

    #[test]
    fn supc_permutation_and_monotonicity(
        v in prop::collection::vec(unit_interval(), 1..200),
        i in any::<prop::sample::Index>(),
        shrink in 0.0f64..1.0,
    ) {
        let base = supc(&v, &DEFAULT_SUPC_THRESHOLDS).unwrap();
        let mut rev = v.clone();
        rev.reverse();
        prop_assert_eq!(base, supc(&rev, &DEFAULT_SUPC_THRESHOLDS).unwrap());
        let mut lower = v.clone();
        let j = i.index(v.len());
        lower[j] *= shrink;
        prop_assert!(supc(&lower, &DEFAULT_SUPC_THRESHOLDS).unwrap() >= base);
    }

    #[test]
    fn damping_is_below_identity(a in 0.0f64..0.99, b in 1.0f64..8.0, t in 0.0f64..=1.0, u in 0.0f64..=1.0) {
        let f = DampingFunction::new(a, b).unwrap();
        prop_assert!(f.eval(t) <= t + 1e-15);
        prop_assert!((0.0..=1.0).contains(&f.eval(t)));
        if t <= u {
            prop_assert!(f.eval(t) <= f.eval(u));
        }
        prop_assert!((f.eval(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn filter_ignores_input_order(v in prop::collection::vec(unit_interval(), 10..150), rot in 0usize..150) {
        let p: Vec<Option<f64>> = v.iter().copied().map(Some).collect();
        let y = filter_labels(&p).unwrap();
        let k = rot % p.len();
        let mut q = p.clone();
        q.rotate_left(k);
        let mut z = filter_labels(&q).unwrap();
        z.rotate_right(k);
        prop_assert_eq!(y, z);
    }

    #[test]
    fn ground_truth_grows_with_distance(d in prop::collection::vec(0.0f64..2.0, 1..50), s in 0.01f64..1.0) {
        let a = labels_within(&d, s).unwrap();
        let b = labels_within(&d, 2.0 * s).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x <= y));
    }
}

fn small_cloud(seed: u64) -> PointCloud {
    let rows: Vec<Vec<f64>> = uniform_values(120, seed)
        .chunks(3)
        .map(|c| c.to_vec())
        .collect();
    PointCloud::from_rows(&rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trivial_labelings_have_fixed_dispersion(seed in 0u64..1000, alpha in 0.1f64..100.0) {
        let c = small_cloud(seed);
        let sets = knn_neighbor_sets(&c, DEFAULT_K_DISP);
        let (d1, d2) = (DampingFunction::purity_default(), DampingFunction::point_default());
        let zero = dispersion(&c, &vec![0; c.len()], &sets, alpha, d1, d2).unwrap();
        prop_assert_eq!(zero.dispersion, 0.0);
        let one = dispersion(&c, &vec![1; c.len()], &sets, alpha, d1, d2).unwrap();
        prop_assert!((one.dispersion - alpha).abs() < 1e-12);
    }

    #[test]
    fn scores_survive_rigid_motions(seed in 0u64..1000, shift in prop::array::uniform3(-5.0f64..5.0)) {
        let lc = generate(&ShapeSpec { shape: Shape::TwoSpheres(2), n: 600, noise_amplitude: 0.01, seed }).unwrap();
        let rot = random_rotation(3, seed + 1);
        let moved = lc.cloud.affine(&rot, &shift);
        let nulls = NullCache::in_memory(0);
        let p = Hyperparams::radius(0.4, 0.8, 0.5).unwrap();
        let a = singularity_scores(&lc.cloud, &p, &nulls, 0.1, seed).unwrap();
        let b = singularity_scores(&moved, &p, &nulls, 0.1, seed).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.d_hat, y.d_hat);
            prop_assert_eq!(x.k_obs, y.k_obs);
            if let (Some(m), Some(n)) = (x.mmd, y.mmd) {
                prop_assert!((m - n).abs() <= 1e-6, "{} vs {}", m, n);
            }
        }
    }

    #[test]
    fn projection_is_a_contraction(seed in 0u64..1000, eta in 0.5f64..0.99) {
        let c = small_cloud(seed);
        let nb = neighbors_radius(&c, 0, 0.8).unwrap();
        prop_assume!(!nb.is_empty());
        let pca = local_pca(&nb.rescaled, eta).unwrap();
        let proj = project(&nb, &pca);
        for (x, y) in nb.rescaled.rows().zip(proj.rows()) {
            let nx: f64 = x.iter().map(|v| v * v).sum();
            let ny: f64 = y.iter().map(|v| v * v).sum();
            prop_assert!(ny <= nx + 1e-12);
        }
    }

    #[test]
    fn mmd_is_nonnegative(seed in 0u64..1000, alpha in 0.05f64..0.95) {
        let c = small_cloud(seed);
        let pts: Vec<Vec<f64>> = c.rows().map(|r| r.iter().map(|v| v - 0.5).collect()).collect();
        let k = PowerSeriesKernel::geometric(alpha).unwrap();
        prop_assert!(mmd_sq_vs_uniform_disk(&PointCloud::from_rows(&pts).unwrap(), &k).unwrap() >= -1e-15);
    }

    #[test]
    fn seeded_paths_are_deterministic(seed in any::<u64>()) {
        let spec = ShapeSpec { shape: Shape::PinchTorus, n: 50, noise_amplitude: 0.01, seed };
        prop_assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        prop_assert_eq!(subsample_indices(500, 0.3, seed).unwrap(), subsample_indices(500, 0.3, seed).unwrap());
        let k = PowerSeriesKernel::default();
        prop_assert_eq!(build_null(2, &k, 50, 200, seed).unwrap(), build_null(2, &k, 50, 200, seed).unwrap());
    }
}
