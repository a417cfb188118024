//! Browser bindings. Each exported function returns a JSON string; the
//! computations live in plain Rust functions so they can be tested natively.

use serde::Serialize;
use smcvar::benchmarks::{simulate_changepoint, ChangePointModel};
use smcvar::engine::run_population;
use smcvar::estimators::{point_estimate, var_ancestral};
use smcvar::oracle::changepoint_exact_mean;
use smcvar::resampling::{multinomial_counts, residual_bernoulli_counts};
use smcvar::rng::{derive_seed, rng_from_seed, substream};
use smcvar::weights::normalize_log_weights;
use smcvar::{run_filter, FilterConfig, ResamplePolicy, Result, Scheme, SmcError, StateSpaceModel};
use wasm_bindgen::prelude::*;

fn policy(threshold: f64) -> Result<ResamplePolicy> {
    if threshold.is_nan() {
        return Err(SmcError::InvalidConfiguration("threshold is not a number".into()));
    }
    ResamplePolicy::threshold(threshold)
}

/// One filter run on simulated change-point data, stage by stage.
#[derive(Debug, Clone, Serialize)]
pub struct Trace {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Exact `E(X_t | Y_1..t)`.
    pub exact: Vec<f64>,
    pub estimate: Vec<f64>,
    /// Ancestral-origin standard error of each stage's estimate.
    pub se: Vec<f64>,
    pub cv2: Vec<f64>,
    pub resample_times: Vec<usize>,
}

pub fn changepoint_trace_impl(
    horizon: usize,
    rho: f64,
    xi: f64,
    particles: usize,
    threshold: f64,
    seed: u64,
) -> Result<Trace> {
    let data = simulate_changepoint(horizon, rho, xi, substream(seed, 0))?;
    let exact = changepoint_exact_mean(&data.y, rho, xi)?;
    let model = ChangePointModel::new(rho, xi, data.y.clone())?;
    let config = FilterConfig::new(particles, policy(threshold)?, Scheme::MultinomialBootstrap);
    let mut rng = rng_from_seed(substream(seed, 1));
    let mut estimate = Vec::with_capacity(horizon);
    let mut se = Vec::with_capacity(horizon);
    let mut failure = None;
    let pop = run_population(&model, &config, &mut rng, |pop| {
        let psi: Vec<f64> = pop.particles().iter().map(|p| model.functional(p, 0)).collect();
        let step = point_estimate(pop.log_v(), &psi).and_then(|mu| {
            let var = var_ancestral(pop.log_v(), pop.origins(), &psi, mu, particles)?;
            Ok((mu, (var / particles as f64).sqrt()))
        });
        match step {
            Ok((mu, s)) => {
                estimate.push(mu);
                se.push(s);
            }
            Err(e) => failure = failure.take().or(Some(e)),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Trace {
        x: data.x,
        y: data.y,
        exact,
        estimate,
        se,
        cv2: pop.cv2_trace().to_vec(),
        resample_times: pop.resample_times().to_vec(),
    })
}

/// Empirical offspring-count moments per particle for both schemes.
#[derive(Debug, Clone, Serialize)]
pub struct CountStudy {
    /// `M V_i`.
    pub expected: Vec<f64>,
    pub multinomial_mean: Vec<f64>,
    pub multinomial_var: Vec<f64>,
    /// `M V_i (1 − V_i)`.
    pub multinomial_var_theory: Vec<f64>,
    pub residual_mean: Vec<f64>,
    pub residual_var: Vec<f64>,
    /// `f(1 − f)` with `f` the fractional part of `M V_i`.
    pub residual_var_theory: Vec<f64>,
    /// Share of residual draws with a population size different from `M`.
    pub residual_size_changed: f64,
}

fn moments(sum: &[f64], sq: &[f64], n: f64) -> (Vec<f64>, Vec<f64>) {
    sum.iter()
        .zip(sq)
        .map(|(s, q)| {
            let mean = s / n;
            (mean, q / n - mean * mean)
        })
        .unzip()
}

pub fn resampling_counts_impl(weights: &[f64], size: usize, draws: usize, seed: u64) -> Result<CountStudy> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(SmcError::InvalidConfiguration("weights must be finite and nonnegative".into()));
    }
    if draws == 0 || size == 0 {
        return Err(SmcError::InvalidConfiguration("size and draws must be positive".into()));
    }
    let logs: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let v = normalize_log_weights(&logs).ok_or(SmcError::DegenerateWeights { stage: 0 })?;
    let n = v.len();
    let mut rng = rng_from_seed(seed);
    let (mut ms, mut mq, mut rs, mut rq) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut changed = 0usize;
    for _ in 0..draws {
        let multi = multinomial_counts(&v, size, &mut rng)?;
        let resid = residual_bernoulli_counts(&v, size, &mut rng)?;
        changed += usize::from(resid.new_size() != size);
        for i in 0..n {
            let (a, b) = (multi.counts[i] as f64, resid.counts[i] as f64);
            ms[i] += a;
            mq[i] += a * a;
            rs[i] += b;
            rq[i] += b * b;
        }
    }
    let d = draws as f64;
    let (multinomial_mean, multinomial_var) = moments(&ms, &mq, d);
    let (residual_mean, residual_var) = moments(&rs, &rq, d);
    let expected: Vec<f64> = v.iter().map(|p| size as f64 * p).collect();
    Ok(CountStudy {
        multinomial_var_theory: v.iter().map(|p| size as f64 * p * (1.0 - p)).collect(),
        residual_var_theory: expected.iter().map(|x| (x - x.floor()) * (1.0 - x + x.floor())).collect(),
        expected,
        multinomial_mean,
        multinomial_var,
        residual_mean,
        residual_var,
        residual_size_changed: changed as f64 / d,
    })
}

/// Coverage of 1- and 2-standard-error intervals over fresh data sets.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageStudy {
    pub replications: usize,
    pub cover1: f64,
    pub cover2: f64,
    pub cover1_gb: f64,
    pub cover2_gb: f64,
    /// `(ψ̂ − ψ_T)/se` per replication, ancestral-origin se.
    pub z: Vec<f64>,
}

pub fn coverage_study_impl(
    replications: usize,
    horizon: usize,
    particles: usize,
    threshold: f64,
    seed: u64,
) -> Result<CoverageStudy> {
    let (rho, xi) = (0.01, 1.0);
    if replications == 0 {
        return Err(SmcError::InvalidConfiguration("need at least one replication".into()));
    }
    let config = FilterConfig::new(particles, policy(threshold)?, Scheme::MultinomialBootstrap).with_gilks_berzuini(true);
    let mut hits = [0usize; 4];
    let mut z = Vec::with_capacity(replications);
    for r in 0..replications {
        let s = derive_seed(seed, r as u64);
        let data = simulate_changepoint(horizon, rho, xi, substream(s, 0))?;
        let truth = *changepoint_exact_mean(&data.y, rho, xi)?.last().expect("horizon >= 1");
        let out = run_filter(&ChangePointModel::new(rho, xi, data.y)?, &config, substream(s, 1))?;
        let err = (out.estimate() - truth).abs();
        let se = out.se_ancestral().unwrap_or(f64::NAN);
        let se_gb = out.components[0].se_gb().unwrap_or(f64::NAN);
        for (k, (sd, zk)) in [(se, 1.0), (se, 2.0), (se_gb, 1.0), (se_gb, 2.0)].into_iter().enumerate() {
            hits[k] += usize::from(err <= zk * sd);
        }
        z.push((out.estimate() - truth) / se);
    }
    let frac = |k: usize| hits[k] as f64 / replications as f64;
    Ok(CoverageStudy {
        replications,
        cover1: frac(0),
        cover2: frac(1),
        cover1_gb: frac(2),
        cover2_gb: frac(3),
        z,
    })
}

fn to_js<T: Serialize>(result: Result<T>) -> std::result::Result<String, JsValue> {
    result
        .map_err(|e| JsValue::from_str(&e.to_string()))
        .and_then(|v| serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string())))
}

/// Pass `threshold = Infinity` for no resampling, `0` for every stage.
#[wasm_bindgen]
pub fn changepoint_trace(
    horizon: usize,
    rho: f64,
    xi: f64,
    particles: usize,
    threshold: f64,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    to_js(changepoint_trace_impl(horizon, rho, xi, particles, threshold, seed as u64))
}

#[wasm_bindgen]
pub fn resampling_counts(weights: &[f64], size: usize, draws: usize, seed: u32) -> std::result::Result<String, JsValue> {
    to_js(resampling_counts_impl(weights, size, draws, seed as u64))
}

#[wasm_bindgen]
pub fn coverage_study(
    replications: usize,
    horizon: usize,
    particles: usize,
    threshold: f64,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    to_js(coverage_study_impl(replications, horizon, particles, threshold, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_tracks_the_exact_filter() {
        let t = changepoint_trace_impl(80, 0.02, 1.0, 2000, 2.0, 5).unwrap();
        assert_eq!((t.estimate.len(), t.se.len(), t.exact.len()), (80, 80, 80));
        let within = t
            .estimate
            .iter()
            .zip(&t.exact)
            .zip(&t.se)
            .filter(|((e, x), s)| (*e - *x).abs() <= 3.0 * **s + 1e-12)
            .count();
        assert!(within >= 70, "{within} of 80 stages within 3 se");
        assert!(t.resample_times.iter().all(|&s| s < 80));
    }

    #[test]
    fn trace_without_resampling() {
        let t = changepoint_trace_impl(20, 0.05, 1.0, 100, f64::INFINITY, 1).unwrap();
        assert!(t.resample_times.is_empty());
        assert!(changepoint_trace_impl(20, 0.05, 1.0, 100, f64::NAN, 1).is_err());
    }

    #[test]
    fn counts_match_theory() {
        let s = resampling_counts_impl(&[1.0, 2.0, 3.0, 4.0], 7, 20_000, 3).unwrap();
        for i in 0..4 {
            assert!((s.multinomial_mean[i] - s.expected[i]).abs() < 0.05);
            assert!((s.residual_mean[i] - s.expected[i]).abs() < 0.02);
            assert!((s.multinomial_var[i] - s.multinomial_var_theory[i]).abs() < 0.05 * s.multinomial_var_theory[i]);
            assert!((s.residual_var[i] - s.residual_var_theory[i]).abs() < 0.02);
        }
        assert!(s.residual_size_changed > 0.0);
        assert!(resampling_counts_impl(&[0.0, 0.0], 3, 10, 0).is_err());
        assert!(resampling_counts_impl(&[-1.0, 2.0], 3, 10, 0).is_err());
    }

    #[test]
    fn small_coverage_study() {
        let c = coverage_study_impl(40, 50, 500, 2.0, 8).unwrap();
        assert_eq!(c.z.len(), 40);
        assert!(c.cover2 >= 0.7 && c.cover2_gb >= c.cover1);
    }
}
