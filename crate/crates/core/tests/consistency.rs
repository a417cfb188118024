//! Large-sample behaviour against exact answers from the enumeration oracle.

use smcvar::oracle::two_state_example;
use smcvar::replicate::replicate;
use smcvar::resampling::{multinomial_counts, residual_bernoulli_counts};
use smcvar::rng::{derive_seed, rng_from_seed};
use smcvar::stats::mean;
use smcvar::{run_filter, FilterConfig, ResamplePolicy, Scheme};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const HORIZON: usize = 4;

#[test]
fn point_estimate_within_four_sigma() {
    let model = two_state_example(HORIZON);
    let e = model.enumerate().unwrap();
    let sigma2 = e.sigma2_every_stage().unwrap().total();
    let m = 100_000;
    let out = run_filter(&model, &FilterConfig::bootstrap_every_stage(m), 31).unwrap();
    assert!((out.estimate() - e.psi_t).abs() < 4.0 * (sigma2 / m as f64).sqrt());
}

#[test]
fn ancestral_variance_converges_to_the_asymptotic_variance() {
    let model = two_state_example(HORIZON);
    let sigma2 = model.enumerate().unwrap().sigma2_every_stage().unwrap().total();
    let reps = 200;
    let mut rel = Vec::new();
    for (i, &m) in [1_000usize, 10_000, 100_000].iter().enumerate() {
        let config = FilterConfig::bootstrap_every_stage(m).with_split(2);
        let runs = replicate(reps, |r| {
            let out = run_filter(&model, &config, derive_seed(500 + i as u64, r as u64)).unwrap();
            let c = &out.components[0];
            (c.var_ancestral.unwrap(), c.var_split.unwrap())
        });
        let anc = mean(&runs.iter().map(|r| r.0).collect::<Vec<_>>());
        let split = mean(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
        rel.push((anc - sigma2).abs() / sigma2);
        if m == 100_000 {
            assert!(rel[i] < 0.10, "ancestral {anc} vs {sigma2}");
            assert!((split - anc).abs() / anc < 0.20, "split {split} vs ancestral {anc}");
        }
    }
    assert!(rel.iter().all(|r| *r < 0.25), "relative errors {rel:?}");
}

#[test]
fn residual_variance_matches_its_own_schedule() {
    let model = two_state_example(HORIZON);
    let e = model.enumerate().unwrap();
    let sigma2_r = e.sigma2(&[1, 2, 3], true).unwrap().total();
    let m = 20_000;
    let config = FilterConfig::new(m, ResamplePolicy::Always, Scheme::ResidualBernoulli);
    let vars = replicate(100, |r| {
        run_filter(&model, &config, derive_seed(600, r as u64)).unwrap().components[0].var_ancestral.unwrap()
    });
    let got = mean(&vars);
    assert!((got - sigma2_r).abs() / sigma2_r < 0.15, "{got} vs {sigma2_r}");
}

#[test]
fn single_draw_multinomial_is_categorical() {
    let p = [0.1, 0.2, 0.3, 0.4];
    let n = 100_000;
    let mut rng = rng_from_seed(9);
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[multinomial_counts(&p, 1, &mut rng).unwrap().parents[0]] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&p)
        .map(|(&c, &q)| (c as f64 - n as f64 * q).powi(2) / (n as f64 * q))
        .sum();
    let p_value = ChiSquared::new(3.0).unwrap().sf(chi2);
    assert!(p_value > 1e-3, "chi2 {chi2}");
}

#[test]
fn offspring_moments() {
    let p = [0.05, 0.15, 0.35, 0.45];
    let size = 10;
    let n = 100_000;
    let mut rng = rng_from_seed(10);
    for residual in [false, true] {
        let mut sum = [0.0; 4];
        let mut sq = [0.0; 4];
        for _ in 0..n {
            let off = if residual {
                residual_bernoulli_counts(&p, size, &mut rng).unwrap()
            } else {
                multinomial_counts(&p, size, &mut rng).unwrap()
            };
            for (i, &c) in off.counts.iter().enumerate() {
                sum[i] += c as f64;
                sq[i] += (c * c) as f64;
            }
        }
        for i in 0..4 {
            let x = size as f64 * p[i];
            let mean = sum[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            let expected_var = if residual {
                let frac = x - x.floor();
                frac * (1.0 - frac)
            } else {
                x * (1.0 - p[i])
            };
            assert!((mean - x).abs() < 5.0 * (expected_var.max(1e-12) / n as f64).sqrt() + 1e-12);
            assert!((var - expected_var).abs() < 0.03 * expected_var + 1e-9, "residual={residual} i={i}: {var}");
        }
    }
}

/// `w̄_1⋯w̄_t / η_t → 1`; checked over replications at each stage.
#[test]
fn running_mean_weight_product_estimates_eta() {
    let model = two_state_example(HORIZON);
    let e = model.enumerate().unwrap();
    let config = FilterConfig::bootstrap_every_stage(100_000);
    let ratios = replicate(40, |r| {
        let mut rng = rng_from_seed(derive_seed(700, r as u64));
        let mut trace = Vec::new();
        smcvar::engine::run_population(&model, &config, &mut rng, |pop| trace.push(pop.log_wbar_prefix())).unwrap();
        trace
    });
    for t in 1..=HORIZON {
        let xs: Vec<f64> = ratios.iter().map(|tr| (tr[t - 1] - e.eta[t].ln()).exp()).collect();
        let se = (smcvar::stats::sample_variance(&xs) / xs.len() as f64).sqrt();
        assert!((mean(&xs) - 1.0).abs() < 3.0 * se + 1e-12, "stage {t}: {} ± {se}", mean(&xs));
    }
}
