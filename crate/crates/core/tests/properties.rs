use approx::assert_relative_eq;
use proptest::prelude::*;
use smcvar::estimators::{origin_group_weights, point_estimate, var_ancestral};
use smcvar::oracle::two_state_example;
use smcvar::resampling::{
    cv_squared, cv_squared_from_unnormalized, multinomial_counts, residual_bernoulli_counts, stratified_group_counts_log,
    GroupLayout, Scheme,
};
use smcvar::rng::rng_from_seed;
use smcvar::weights::normalize_log_weights;
use smcvar::{run_filter_full, FilterConfig, ResamplePolicy};

/// Log-weights on a 2⁻¹⁰ grid so shifting by an integer is exact.
fn grid_log_weights(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-20_000i32..=0).prop_map(|k| k as f64 / 1024.0), 1..max_len)
}

fn weights_and_psi(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..max_len).prop_flat_map(|n| {
        (
            prop::collection::vec(-30.0f64..0.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
    })
}

proptest! {
    #[test]
    fn normalization_ignores_exact_shifts(lw in grid_log_weights(50), shift in -700i32..700) {
        let shifted: Vec<f64> = lw.iter().map(|x| x + shift as f64).collect();
        let a = normalize_log_weights(&lw).unwrap();
        let b = normalize_log_weights(&shifted).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn point_estimate_is_permutation_invariant((lw, psi) in weights_and_psi(40), rot in 0usize..40) {
        let n = lw.len();
        let rot = rot % n;
        let (mut lw2, mut psi2) = (lw.clone(), psi.clone());
        lw2.rotate_left(rot);
        psi2.rotate_left(rot);
        let a = point_estimate(&lw, &psi).unwrap();
        let b = point_estimate(&lw2, &psi2).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn ancestral_variance_is_quadratic_in_the_centre(
        (lw, psi) in weights_and_psi(40),
        groups in 1usize..6,
        mu in -3.0f64..3.0,
    ) {
        let n = lw.len();
        let origins: Vec<usize> = (0..n).map(|i| i % groups).collect();
        let v = |c: f64| var_ancestral(&lw, &origins, &psi, c, groups).unwrap();
        // A quadratic is determined by three points; the fourth must fit.
        let (a, b, c) = (v(-1.0), v(0.0), v(1.0));
        let curvature = (a + c) / 2.0 - b;
        let slope = (c - a) / 2.0;
        let predicted = b + slope * mu + curvature * mu * mu;
        prop_assert!((v(mu) - predicted).abs() <= 1e-9 * (1.0 + a.abs() + b.abs() + c.abs()));
        prop_assert!(v(mu) >= 0.0);
    }

    #[test]
    fn origin_group_weights_sum_to_population_size((lw, _) in weights_and_psi(60), groups in 1usize..8) {
        let n = lw.len();
        let origins: Vec<usize> = (0..n).map(|i| (i * 7) % groups).collect();
        let w = origin_group_weights(&lw, &origins, groups).unwrap();
        prop_assert!((w.iter().sum::<f64>() - n as f64).abs() < 1e-9 * n as f64);
    }

    #[test]
    fn cv2_forms_agree((lw, _) in weights_and_psi(60)) {
        let normalized = normalize_log_weights(&lw).unwrap();
        let linear: Vec<f64> = lw.iter().map(|x| x.exp()).collect();
        let a = cv_squared(&normalized).unwrap();
        let b = cv_squared_from_unnormalized(&linear);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b));
    }

    #[test]
    fn offspring_counts_are_conserved((lw, _) in weights_and_psi(60), size in 1usize..200, seed: u64) {
        let normalized = normalize_log_weights(&lw).unwrap();
        let mut rng = rng_from_seed(seed);
        let multi = multinomial_counts(&normalized, size, &mut rng).unwrap();
        prop_assert_eq!(multi.counts.iter().sum::<usize>(), size);
        prop_assert_eq!(multi.parents.len(), size);
        let resid = residual_bernoulli_counts(&normalized, size, &mut rng).unwrap();
        prop_assert_eq!(resid.counts.iter().sum::<usize>(), resid.parents.len());
        for (c, v) in resid.counts.iter().zip(&normalized) {
            let x = v * size as f64;
            prop_assert!(*c as f64 >= x.floor() && *c as f64 <= x.floor() + 1.0);
        }
    }

    #[test]
    fn stratified_parents_stay_in_their_group((lw, _) in weights_and_psi(60), k in 1usize..5, seed: u64) {
        let n = lw.len();
        prop_assume!(n >= k);
        let layout = GroupLayout::new(n, k).unwrap();
        let mut rng = rng_from_seed(seed);
        for scheme in [Scheme::MultinomialBootstrap, Scheme::ResidualBernoulli] {
            let (off, new_layout) = stratified_group_counts_log(&lw, &layout, scheme, &mut rng).unwrap();
            prop_assert_eq!(new_layout.total(), off.parents.len());
            for (g, range) in new_layout.ranges().enumerate() {
                for &p in &off.parents[range] {
                    prop_assert!(layout.range(g).contains(&p));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn filter_is_a_function_of_its_seed(seed: u64, c in 0.0f64..3.0, residual: bool) {
        let model = two_state_example(4);
        let scheme = if residual { Scheme::ResidualBernoulli } else { Scheme::MultinomialBootstrap };
        let config = FilterConfig::new(64, ResamplePolicy::CvThreshold(c), scheme).with_gilks_berzuini(true);
        let (a, pa) = run_filter_full(&model, &config, seed).unwrap();
        let (b, _) = run_filter_full(&model, &config, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(pa.ancestor_labels(1).unwrap(), pa.origins());
    }
}

#[test]
fn uniform_weights_normalize_exactly() {
    let v = normalize_log_weights(&[-3.0; 8]).unwrap();
    assert!(v.iter().all(|x| *x == 0.125));
    assert_relative_eq!(cv_squared(&v).unwrap(), 0.0);
}
