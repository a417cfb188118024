//! Small statistical helpers used by benchmarks and acceptance suites.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::weights::stable_sum;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log φ(x; mean, var)`.
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    -0.5 * (LN_2PI + var.ln() + z * z / var)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    stable_sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance (`n − 1` denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mu = mean(xs);
    stable_sum(xs.iter().map(|x| (x - mu) * (x - mu))) / (xs.len() - 1) as f64
}

/// Anderson–Darling normality test with estimated mean and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AndersonDarling {
    /// `A²` on the standardized sample.
    pub statistic: f64,
    /// Small-sample adjusted `A*² = A²(1 + 0.75/n + 2.25/n²)`.
    pub adjusted: f64,
    /// Approximate p-value (D'Agostino & Stephens, table 4.9).
    pub p_value: f64,
}

/// Tests `xs` against the normal family with mean and variance estimated
/// from the data. Needs at least 8 points.
pub fn anderson_darling_normal(xs: &[f64]) -> Option<AndersonDarling> {
    let n = xs.len();
    if n < 8 {
        return None;
    }
    let mu = mean(xs);
    let sd = sample_variance(xs).sqrt();
    if !(sd > 0.0) {
        return None;
    }
    let std_normal = Normal::new(0.0, 1.0).ok()?;
    let mut z: Vec<f64> = xs.iter().map(|x| (x - mu) / sd).collect();
    z.sort_by(f64::total_cmp);
    let nf = n as f64;
    let s = stable_sum((0..n).map(|i| {
        let lo = std_normal.cdf(z[i]).max(f64::MIN_POSITIVE);
        let hi = std_normal.sf(z[n - 1 - i]).max(f64::MIN_POSITIVE);
        (2.0 * i as f64 + 1.0) * (lo.ln() + hi.ln())
    }));
    let statistic = -nf - s / nf;
    let adjusted = statistic * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p_value = if adjusted >= 0.6 {
        (1.2937 - 5.709 * adjusted + 0.0186 * adjusted * adjusted).exp()
    } else if adjusted >= 0.34 {
        (0.9177 - 4.279 * adjusted - 1.38 * adjusted * adjusted).exp()
    } else if adjusted >= 0.2 {
        1.0 - (-8.318 + 42.796 * adjusted - 59.938 * adjusted * adjusted).exp()
    } else {
        1.0 - (-13.436 + 101.14 * adjusted - 223.73 * adjusted * adjusted).exp()
    };
    Some(AndersonDarling {
        statistic,
        adjusted,
        p_value: p_value.clamp(0.0, 1.0),
    })
}
