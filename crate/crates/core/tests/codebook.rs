mod common;

use common::*;
use proptest::prelude::*;
use s8bq_core::{
    fit_codebook, fit_lloyd_max, grid_value, optimal_1d_kmeans, CentroidCount, Codebook, CodebookConfig,
    LambdaSchedule, LloydInit, ScaleMode,
};

fn lloyd(values: Vec<f64>, k: usize) -> s8bq_core::LloydFit {
    fit_lloyd_max(&tensor(values), k, 500, 1e-14, &LloydInit::Quantiles).unwrap()
}

#[test]
fn lloyd_examples() {
    let fit = lloyd(vec![5.0, 5.0, 5.0], 1);
    assert_eq!(fit.centroids, vec![5.0]);
    assert_eq!(fit.mse, 0.0);

    let fit = lloyd(vec![-1.0, -0.9, 0.9, 1.0], 2);
    assert!((fit.centroids[0] + 0.95).abs() < 1e-15);
    assert!((fit.centroids[1] - 0.95).abs() < 1e-15);
    // Four squared errors of 0.05^2, averaged.
    assert!((fit.mse - 0.0025).abs() < 1e-15);
    assert!((fit.mse - dp_kmeans_mse(&[-1.0, -0.9, 0.9, 1.0], 2)).abs() < 1e-15);
}

#[test]
fn lloyd_rejects_bad_k() {
    let t = tensor(vec![1.0, 1.0, 2.0]);
    assert!(fit_lloyd_max(&t, 3, 10, 0.0, &LloydInit::Quantiles).is_err());
    assert!(fit_lloyd_max(&t, 0, 10, 0.0, &LloydInit::Quantiles).is_err());
    assert!(fit_lloyd_max(&tensor(vec![]), 1, 10, 0.0, &LloydInit::Quantiles).is_err());
}

#[test]
fn gaussian_k4_close_to_optimum() {
    let values = gaussian(11, 1000, 1.0);
    let fit = lloyd(values.clone(), 4);
    let opt = dp_kmeans_mse(&values, 4);
    assert!(fit.mse >= opt * (1.0 - 1e-12));
    assert!(fit.mse <= opt * 1.05, "lloyd {} vs optimum {opt}", fit.mse);
}

#[test]
fn dp_examples() {
    let fit = optimal_1d_kmeans(&tensor(vec![0.0, 1.0]), 2).unwrap();
    assert_eq!(fit.centroids, vec![0.0, 1.0]);
    assert_eq!(fit.mse, 0.0);

    let fit = optimal_1d_kmeans(&tensor(vec![0.0, 0.1, 1.0]), 2).unwrap();
    assert!((fit.centroids[0] - 0.05).abs() < 1e-15);
    assert_eq!(fit.centroids[1], 1.0);
    assert!((fit.mse - 0.005 / 3.0).abs() < 1e-15);
}

#[test]
fn dp_matches_brute_force_on_twelve_points() {
    for seed in 0..20 {
        let values = uniform(seed, 12, 0.0, 1.0);
        let (mse, means) = brute_kmeans3(&values);
        let fit = optimal_1d_kmeans(&tensor(values), 3).unwrap();
        assert!((fit.mse - mse).abs() < 1e-14, "seed {seed}");
        for (a, b) in fit.centroids.iter().zip(&means) {
            assert!((a - b).abs() < 1e-12, "seed {seed}");
        }
    }
}

#[test]
fn dp_matches_reference_program() {
    for seed in 0..40 {
        let n = 20 + (seed as usize * 7) % 180;
        let k = 1 + seed as usize % 8;
        let values = mixed(seed, n);
        let fit = optimal_1d_kmeans(&tensor(values.clone()), k).unwrap();
        let reference = dp_kmeans_mse(&values, k);
        assert!((fit.mse - reference).abs() <= 1e-12 * reference.max(1e-3), "seed {seed}");
    }
}

#[test]
fn dp_solution_is_a_lloyd_fixed_point() {
    let values = mixed(3, 150);
    let opt = optimal_1d_kmeans(&tensor(values.clone()), 6).unwrap();
    let fit = fit_lloyd_max(&tensor(values), 6, 50, 0.0, &LloydInit::Explicit(opt.centroids.clone())).unwrap();
    assert!(fit.iterations <= 1);
    assert_eq!(fit.refinements, 0);
    for (a, b) in fit.centroids.iter().zip(&opt.centroids) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn codebook_centroids_on_int8_grid() {
    let values = gaussian(5, 4096, 0.25);
    let fit = fit_codebook(&tensor(values), &CodebookConfig::with_bits(5)).unwrap();
    let cb = &fit.codebook;
    assert!(cb.len() <= 31);
    for (j, &k) in cb.numerators().iter().enumerate() {
        assert_eq!(cb.centroid(j), grid_value(cb.scale(), k));
        assert_eq!(cb.centroid(j), cb.scale() * f64::from(k) / 128.0);
    }
    assert!(cb.numerators().windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn thirty_one_gaussian_centroids_form_several_regions() {
    let cb = fitted(gaussian(8, 8192, 0.25), 5, 5e-4);
    assert!(cb.len() > 20);
    assert!(cb.regions().len() >= 3);
    // Regions tile one interval with no gaps.
    for pair in cb.regions().windows(2) {
        assert_eq!(pair[0].hi, pair[1].lo);
    }
}

#[test]
fn one_bit_symmetric_centers_on_zero() {
    let mut values = vec![0.5; 50];
    values.extend(vec![-0.5; 50]);
    let cb = fitted(values, 1, 5e-4);
    assert_eq!(cb.numerators(), &[0]);
}

#[test]
fn fixed_scale_is_respected() {
    let config = CodebookConfig {
        scale_mode: ScaleMode::Fixed(2.0),
        centroids: CentroidCount::Full,
        ..CodebookConfig::with_bits(2)
    };
    let fit = fit_codebook(&tensor(uniform(2, 500, -1.0, 1.0)), &config).unwrap();
    assert_eq!(fit.codebook.scale(), 2.0);
    assert!(fit.codebook.len() <= 4);
    // Weights span half the scale, so numerators stay within +-64.
    assert!(fit.codebook.numerators().iter().all(|k| k.abs() <= 64));
}

#[test]
fn text_round_trip() {
    let cb = fitted(student_t(4, 2000, 3.0), 4, 1e-3);
    let back = Codebook::from_text(&cb.to_text()).unwrap();
    assert_eq!(back, cb);
    assert!(Codebook::from_text("5 1.0 2\n0 1\n").is_err());
    assert!(Codebook::from_text("garbage").is_err());
}

#[test]
fn per_region_lambda_applies() {
    let cb = fitted(gaussian(8, 8192, 0.25), 5, 5e-4);
    let r = cb.regions().len();
    let lambdas: Vec<f64> = (1..=r).map(|i| i as f64).collect();
    let cb = cb.with_lambda(&LambdaSchedule::PerRegion(lambdas.clone())).unwrap();
    assert_eq!(cb.regions().iter().map(|r| r.lambda).collect::<Vec<_>>(), lambdas);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lloyd_history_non_increasing(seed in 0u64..10_000, n in 2usize..200, k in 1usize..8) {
        let values = mixed(seed, n);
        let k = k.min(n);
        let fit = lloyd(values, k);
        for w in fit.history.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        prop_assert_eq!(*fit.history.last().unwrap(), fit.mse);
    }

    #[test]
    fn lloyd_never_beats_optimum(seed in 0u64..10_000, n in 2usize..120, k in 1usize..8) {
        let values = mixed(seed, n);
        let k = k.min(n);
        let fit = lloyd(values.clone(), k);
        let opt = optimal_1d_kmeans(&tensor(values), k).unwrap();
        prop_assert!(fit.mse >= opt.mse * (1.0 - 1e-12) - 1e-300);
    }

    #[test]
    fn fitted_codebooks_satisfy_grid_invariants(seed in 0u64..10_000, bits in 1u8..=8) {
        let values = mixed(seed, 300);
        let cb = fitted(values, bits, 5e-4);
        prop_assert!(cb.len() <= (1usize << bits));
        for (j, &k) in cb.numerators().iter().enumerate() {
            prop_assert_eq!(cb.centroid(j), grid_value(cb.scale(), k));
        }
        for j in 0..cb.len() {
            prop_assert!(cb.region_of(cb.centroid(j)).is_some());
        }
    }
}
