//! Log-space weight arithmetic.
//!
//! Incremental weights can underflow badly in linear space (the bearings
//! likelihood has a 0.005 rad scale), so every weight in the crate is carried
//! as a natural logarithm and only exponentiated after the per-vector maximum
//! has been subtracted.

fn shifted_sum(log_values: &[f64]) -> (f64, f64) {
    let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return (max, 1.0);
    }
    (max, stable_sum(log_values.iter().map(|&x| (x - max).exp())))
}

/// `ln Σ exp(x_i)`. Returns `-inf` for an empty slice or when every entry is `-inf`.
pub fn log_sum_exp(log_values: &[f64]) -> f64 {
    let (max, total) = shifted_sum(log_values);
    max + total.ln()
}

/// `ln (n⁻¹ Σ exp(x_i))`, the log of the arithmetic mean weight.
///
/// Equal inputs return that common value exactly.
pub fn log_mean_exp(log_values: &[f64]) -> f64 {
    let (max, total) = shifted_sum(log_values);
    max + (total / log_values.len() as f64).ln()
}

/// Normalized weights `exp(x_i) / Σ exp(x_j)` with max-subtraction.
///
/// Returns `None` when all weights are zero or any log-weight is NaN or `+inf`.
pub fn normalize_log_weights(log_values: &[f64]) -> Option<Vec<f64>> {
    let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || log_values.iter().any(|x| x.is_nan()) {
        return None;
    }
    let mut out: Vec<f64> = log_values.iter().map(|&x| (x - max).exp()).collect();
    let mut acc = NeumaierSum::default();
    for &v in &out {
        acc.add(v);
    }
    let total = acc.total();
    for v in &mut out {
        *v /= total;
    }
    Some(out)
}

/// Ratios `v_i / v̄` (mean one) computed from log-weights.
///
/// Uniform weights map to exactly 1.0, which keeps residual resampling
/// deterministic in that case.
pub fn mean_one_ratios(log_values: &[f64]) -> Option<Vec<f64>> {
    let log_mean = log_mean_exp(log_values);
    if !log_mean.is_finite() || log_values.iter().any(|x| x.is_nan()) {
        return None;
    }
    Some(log_values.iter().map(|&x| (x - log_mean).exp()).collect())
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn stable_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<NeumaierSum>().total()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn normalization_survives_underflow() {
        let w = normalize_log_weights(&[-5000.0, -5000.0 + 3f64.ln()]).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-12);
        assert!((w[1] - 0.75).abs() < 1e-12);
        assert!(normalize_log_weights(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).is_none());
        assert!(normalize_log_weights(&[0.0, f64::NAN]).is_none());
    }

    #[test]
    fn uniform_ratios_are_exactly_one() {
        let r = mean_one_ratios(&[-3.7; 49]).unwrap();
        assert!(r.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn neumaier_beats_naive() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(stable_sum(xs), 2.0);
    }
}
