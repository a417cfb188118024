//! Exact filtering means for the normal mean-shift model.
//!
//! Model: `X_1 ~ N(0, ξ)`; for `t ≥ 2`, `X_t = X_{t−1}` with probability
//! `1 − ρ`, otherwise a fresh `N(0, ξ)` draw; `Y_t = X_t + N(0, 1)`.
//!
//! Given the most recent change point `C_t = c`, the level has posterior
//! `N(μ_t(c), λ_t(c))` with `λ_t(c) = 1/(t − c + 1 + 1/ξ)` and
//! `μ_t(c) = λ_t(c) Σ_{i=c}^t Y_i`. The run-length posterior
//! `P(C_t = c | Y_{1:t})` is propagated in log space: a change at `t + 1`
//! has weight `ρ φ(Y_{t+1}; 0, 1 + ξ)` times the total mass, continuing
//! segment `c` has weight `(1 − ρ) φ(Y_{t+1}; μ_t(c), 1 + λ_t(c))`.

use crate::error::{Result, SmcError};
use crate::stats::log_normal_pdf;
use crate::weights::log_sum_exp;

fn check_params(rho: f64, xi: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(SmcError::InvalidConfiguration(format!("rho = {rho} must lie in (0, 1)")));
    }
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(SmcError::InvalidConfiguration(format!("xi = {xi} must be positive")));
    }
    Ok(())
}

/// `E(X_t | Y_{1:t})` for `t = 1..=Y.len()`; O(T²) time, O(T) memory.
pub fn changepoint_exact_mean(y: &[f64], rho: f64, xi: f64) -> Result<Vec<f64>> {
    check_params(rho, xi)?;
    let n = y.len();
    let mut cumsum = Vec::with_capacity(n + 1);
    cumsum.push(0.0);
    for v in y {
        cumsum.push(cumsum.last().unwrap() + v);
    }
    // log_p[c-1] = log P(C_t = c | Y_{1:t}), normalized.
    let mut log_p: Vec<f64> = Vec::with_capacity(n);
    let mut means = Vec::with_capacity(n);
    let (log_rho, log_stay) = (rho.ln(), (-rho).ln_1p());
    let segment = |c: usize, t: usize| {
        let len = (t - c + 1) as f64;
        let lambda = 1.0 / (len + 1.0 / xi);
        (lambda, lambda * (cumsum[t] - cumsum[c - 1]))
    };
    for t in 1..=n {
        let obs = y[t - 1];
        if t == 1 {
            log_p.push(0.0);
        } else {
            let change = log_rho + log_normal_pdf(obs, 0.0, 1.0 + xi);
            for (idx, lp) in log_p.iter_mut().enumerate() {
                let (lambda, mu) = segment(idx + 1, t - 1);
                *lp += log_stay + log_normal_pdf(obs, mu, 1.0 + lambda);
            }
            // the prior mass before this step is 1, so the change term needs no extra factor
            log_p.push(change);
            let total = log_sum_exp(&log_p);
            if !total.is_finite() {
                return Err(SmcError::DegenerateWeights { stage: t });
            }
            for lp in log_p.iter_mut() {
                *lp -= total;
            }
        }
        let mean = log_p
            .iter()
            .enumerate()
            .map(|(idx, lp)| lp.exp() * segment(idx + 1, t).1)
            .sum::<f64>();
        means.push(mean);
    }
    Ok(means)
}

/// Largest horizon accepted by [`changepoint_enumerated_mean`].
pub const ENUMERATION_MAX_T: usize = 20;

/// `E(X_t | Y_{1:t})` by summing over all `2^{t−1}` indicator paths with
/// `I_1 = 1`, using the marginal `N(0, I + ξ 11ᵀ)` of each segment.
pub fn changepoint_enumerated_mean(y: &[f64], rho: f64, xi: f64) -> Result<f64> {
    check_params(rho, xi)?;
    let t = y.len();
    if t == 0 || t > ENUMERATION_MAX_T {
        return Err(SmcError::InvalidConfiguration(format!(
            "enumeration needs 1..={ENUMERATION_MAX_T} observations"
        )));
    }
    let segment_log_marginal = |seg: &[f64]| {
        let n = seg.len() as f64;
        let s: f64 = seg.iter().sum();
        let ss: f64 = seg.iter().map(|v| v * v).sum();
        // det(I + ξ11ᵀ) = 1 + nξ; (I + ξ11ᵀ)⁻¹ = I − ξ/(1 + nξ) 11ᵀ
        -0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * (n * xi).ln_1p() - 0.5 * (ss - xi * s * s / (1.0 + n * xi))
    };
    let mut log_weights = Vec::with_capacity(1 << (t - 1));
    let mut means = Vec::with_capacity(1 << (t - 1));
    for mask in 0u32..(1u32 << (t - 1)) {
        // bit k set ⇔ change at stage k + 2
        let changes = mask.count_ones() as f64;
        let mut lw = changes * rho.ln() + (t as f64 - 1.0 - changes) * (-rho).ln_1p();
        let mut start = 0;
        for k in 1..=t {
            let boundary = k == t || mask & (1 << (k - 1)) != 0;
            if boundary {
                lw += segment_log_marginal(&y[start..k]);
                if k < t {
                    start = k;
                }
            }
        }
        let last = &y[start..];
        let lambda = 1.0 / (last.len() as f64 + 1.0 / xi);
        means.push(lambda * last.iter().sum::<f64>());
        log_weights.push(lw);
    }
    let total = log_sum_exp(&log_weights);
    Ok(log_weights.iter().zip(&means).map(|(lw, m)| (lw - total).exp() * m).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_segment_limit() {
        let y = [0.3, -1.2, 2.0, 0.7];
        let xi = 2.0;
        let means = changepoint_exact_mean(&y, 1e-14, xi).unwrap();
        for t in 1..=y.len() {
            let lambda = 1.0 / (t as f64 + 1.0 / xi);
            let expected = lambda * y[..t].iter().sum::<f64>();
            assert!((means[t - 1] - expected).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn recursion_matches_enumeration() {
        let y = [0.1, 2.5, 2.2, -0.4, 3.1, 0.0, -2.2, -1.9, 0.5, 1.0, 1.2, 4.0];
        for &(rho, xi) in &[(0.01, 1.0), (0.3, 2.0), (0.8, 0.5)] {
            let means = changepoint_exact_mean(&y, rho, xi).unwrap();
            for t in 1..=y.len() {
                let e = changepoint_enumerated_mean(&y[..t], rho, xi).unwrap();
                assert!((means[t - 1] - e).abs() < 1e-10, "rho={rho} t={t}: {} vs {e}", means[t - 1]);
            }
        }
    }

    #[test]
    fn long_series_stays_finite() {
        let y: Vec<f64> = (0..2000).map(|i| if i < 1000 { 40.0 } else { -40.0 }).collect();
        let means = changepoint_exact_mean(&y, 0.01, 1.0).unwrap();
        assert!(means.iter().all(|m| m.is_finite()));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(changepoint_exact_mean(&[1.0], 0.0, 1.0).is_err());
        assert!(changepoint_exact_mean(&[1.0], 0.5, -1.0).is_err());
    }
}
