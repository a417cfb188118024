//! Resampling schemes, triggering policies and the grouped variant used by
//! sample splitting.
//!
//! Every scheme returns an [`Offspring`]: per-particle copy counts together
//! with the parent index of every new particle, in the order the new
//! particles are laid out. Genealogy is recorded from the parent indices, never
//! reconstructed from counts.

use std::fmt;
use std::ops::Range;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};

const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// i.i.d. parent draws with `P(B = j) = W_j`; population size stays `m`.
    MultinomialBootstrap,
    /// `⌊M W_i⌋ + Bernoulli(frac)` copies; population size `M(t)` varies.
    ResidualBernoulli,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::MultinomialBootstrap => "bootstrap",
            Scheme::ResidualBernoulli => "residual",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Scheme {
    type Err = SmcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bootstrap" | "boot" | "multinomial" => Ok(Scheme::MultinomialBootstrap),
            "residual" | "resid" | "residual-bernoulli" => Ok(Scheme::ResidualBernoulli),
            other => Err(SmcError::InvalidConfiguration(format!("unknown scheme `{other}`"))),
        }
    }
}

/// When to resample after a stage `t < T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResamplePolicy {
    Always,
    Never,
    /// Resample whenever `cv_t² ≥ c`.
    CvThreshold(f64),
}

impl ResamplePolicy {
    /// Builds a threshold policy; `c = +inf` is `Never`.
    pub fn threshold(c: f64) -> Result<Self> {
        if c.is_nan() || c < 0.0 {
            return Err(SmcError::InvalidConfiguration(format!(
                "cv^2 threshold must be nonnegative, got {c}"
            )));
        }
        if c == f64::INFINITY {
            return Ok(ResamplePolicy::Never);
        }
        Ok(ResamplePolicy::CvThreshold(c))
    }

    /// Threshold value as reported in outputs: `0` for `Always`, `inf` for `Never`.
    pub fn as_threshold(self) -> f64 {
        match self {
            ResamplePolicy::Always => 0.0,
            ResamplePolicy::Never => f64::INFINITY,
            ResamplePolicy::CvThreshold(c) => c,
        }
    }
}

impl std::str::FromStr for ResamplePolicy {
    type Err = SmcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "always" => Ok(ResamplePolicy::Always),
            "never" | "inf" | "infinity" => Ok(ResamplePolicy::Never),
            other => {
                let c: f64 = other.parse().map_err(|_| {
                    SmcError::InvalidConfiguration(format!("unknown policy `{other}`"))
                })?;
                ResamplePolicy::threshold(c)
            }
        }
    }
}

/// Result of one resampling step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Offspring {
    /// Copies made of each old particle.
    pub counts: Vec<usize>,
    /// Parent index of each new particle.
    pub parents: Vec<usize>,
}

impl Offspring {
    /// Offspring with parents laid out in ascending order of `counts`.
    pub fn from_counts(counts: Vec<usize>) -> Self {
        let parents = expand_counts(&counts);
        Offspring { counts, parents }
    }

    /// Offspring from explicit parent indices into a population of `n_old`.
    ///
    /// # Panics
    /// If a parent index is `>= n_old`.
    pub fn from_parents(parents: Vec<usize>, n_old: usize) -> Self {
        let mut counts = vec![0; n_old];
        for &p in &parents {
            counts[p] += 1;
        }
        Offspring { counts, parents }
    }

    pub fn new_size(&self) -> usize {
        self.parents.len()
    }
}

fn expand_counts(counts: &[usize]) -> Vec<usize> {
    let total = counts.iter().sum();
    let mut parents = Vec::with_capacity(total);
    for (i, &c) in counts.iter().enumerate() {
        parents.extend(std::iter::repeat_n(i, c));
    }
    parents
}

fn check_probability_vector(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(SmcError::ContractViolation("empty weight vector".into()));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(SmcError::ContractViolation(format!("weight {bad} is not a finite nonnegative number")));
    }
    let total: f64 = crate::weights::stable_sum(v.iter().copied());
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(SmcError::ContractViolation(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// `cv² = m⁻¹ Σ (m V_i)² − 1` for a probability vector `V`.
pub fn cv_squared(normalized: &[f64]) -> Result<f64> {
    check_probability_vector(normalized)?;
    Ok(cv_squared_unchecked(normalized))
}

pub(crate) fn cv_squared_unchecked(normalized: &[f64]) -> f64 {
    let m = normalized.len() as f64;
    let s: f64 = crate::weights::stable_sum(normalized.iter().map(|v| v * v));
    (m * s - 1.0).max(0.0)
}

/// `cv²` from unnormalized weights via `Σ (v_i − v̄)² / (m v̄²)`.
pub fn cv_squared_from_unnormalized(weights: &[f64]) -> f64 {
    let m = weights.len() as f64;
    let mean = crate::weights::stable_sum(weights.iter().copied()) / m;
    let ss = crate::weights::stable_sum(weights.iter().map(|v| (v - mean) * (v - mean)));
    ss / (m * mean * mean)
}

/// Draws `m` i.i.d. parents from `V` by inverse-CDF lookup, in draw order.
pub fn multinomial_counts(normalized: &[f64], m: usize, rng: &mut dyn RngCore) -> Result<Offspring> {
    check_probability_vector(normalized)?;
    if m == 0 {
        return Err(SmcError::InvalidConfiguration("multinomial resampling needs m >= 1".into()));
    }
    Ok(multinomial_unchecked(normalized, m, rng))
}

fn multinomial_unchecked(weights: &[f64], m: usize, rng: &mut dyn RngCore) -> Offspring {
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut running = crate::weights::NeumaierSum::default();
    for &w in weights {
        running.add(w);
        cumulative.push(running.total());
    }
    let total = *cumulative.last().expect("non-empty weights");
    let last_positive = weights.iter().rposition(|&w| w > 0.0).expect("positive total weight");
    let parents = (0..m)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            cumulative.partition_point(|&c| c <= u).min(last_positive)
        })
        .collect();
    Offspring::from_parents(parents, weights.len())
}

/// Residual Bernoulli counts `⌊M V_i⌋ + ξ_i`, `ξ_i ~ Bernoulli(M V_i − ⌊M V_i⌋)`.
///
/// The new population size is `Σ counts`, which may be zero; the engine turns
/// that into an extinction error.
pub fn residual_bernoulli_counts(normalized: &[f64], size: usize, rng: &mut dyn RngCore) -> Result<Offspring> {
    check_probability_vector(normalized)?;
    let expected: Vec<f64> = normalized.iter().map(|v| size as f64 * v).collect();
    Ok(residual_bernoulli_from_expected(&expected, rng))
}

/// Residual Bernoulli resampling given expected copy numbers `x_i = M V_i`.
///
/// One uniform is drawn per particle, in particle order, even when the
/// fractional part is zero.
pub fn residual_bernoulli_from_expected(expected: &[f64], rng: &mut dyn RngCore) -> Offspring {
    let counts = expected
        .iter()
        .map(|&x| {
            let whole = x.floor();
            let frac = x - whole;
            let extra = rng.random::<f64>() < frac;
            whole as usize + usize::from(extra)
        })
        .collect();
    Offspring::from_counts(counts)
}

/// `γ(x) = (x − ⌊x⌋)(1 − x + ⌊x⌋)/x`, the per-unit variance of a residual copy count.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(SmcError::Domain(format!("gamma_fn needs a positive finite argument, got {x}")));
    }
    let frac = x - x.floor();
    Ok(frac * (1.0 - frac) / x)
}

/// Whether to resample after `stage` given the normalized weights.
///
/// The final stage never resamples.
pub fn should_resample(policy: ResamplePolicy, normalized: &[f64], stage: usize, horizon: usize) -> bool {
    if stage >= horizon {
        return false;
    }
    match policy {
        ResamplePolicy::Always => true,
        ResamplePolicy::Never => false,
        ResamplePolicy::CvThreshold(c) => cv_squared_unchecked(normalized) >= c,
    }
}

/// Contiguous particle groups for sample splitting.
///
/// Groups have `⌊m/k⌋` members except the last, which absorbs the remainder.
/// Under residual resampling group sizes drift, so the layout is rebuilt from
/// the per-group offspring totals after each resampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    bounds: Vec<usize>,
}

impl GroupLayout {
    pub fn new(m: usize, k: usize) -> Result<Self> {
        if k == 0 || k > m {
            return Err(SmcError::InvalidConfiguration(format!(
                "cannot split {m} particles into {k} groups"
            )));
        }
        let r = m / k;
        let mut bounds: Vec<usize> = (0..k).map(|j| j * r).collect();
        bounds.push(m);
        Ok(GroupLayout { bounds })
    }

    pub fn from_sizes(sizes: &[usize]) -> Self {
        let mut bounds = Vec::with_capacity(sizes.len() + 1);
        bounds.push(0);
        let mut acc = 0;
        for &s in sizes {
            acc += s;
            bounds.push(acc);
        }
        GroupLayout { bounds }
    }

    pub fn groups(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn total(&self) -> usize {
        *self.bounds.last().unwrap()
    }

    pub fn range(&self, group: usize) -> Range<usize> {
        self.bounds[group]..self.bounds[group + 1]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.bounds.windows(2).map(|w| w[0]..w[1])
    }

    /// Group index of every particle.
    pub fn assignment(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.total());
        for (j, r) in self.ranges().enumerate() {
            out.extend(std::iter::repeat_n(j, r.len()));
        }
        out
    }
}

/// Resamples each group independently from its own normalized weights.
///
/// `weights` may be unnormalized; they are normalized within each group.
/// Parents are global indices and never cross group boundaries; the returned
/// layout describes the new population.
pub fn stratified_group_counts(
    weights: &[f64],
    layout: &GroupLayout,
    scheme: Scheme,
    rng: &mut dyn RngCore,
) -> Result<(Offspring, GroupLayout)> {
    let log_weights: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    stratified_group_counts_log(&log_weights, layout, scheme, rng)
}

/// As [`stratified_group_counts`] with log-weights, normalized per group so a
/// group far below the global maximum does not underflow.
pub fn stratified_group_counts_log(
    log_weights: &[f64],
    layout: &GroupLayout,
    scheme: Scheme,
    rng: &mut dyn RngCore,
) -> Result<(Offspring, GroupLayout)> {
    if layout.total() != log_weights.len() {
        return Err(SmcError::ContractViolation(format!(
            "layout covers {} particles, weights has {}",
            layout.total(),
            log_weights.len()
        )));
    }
    let mut parents = Vec::with_capacity(log_weights.len());
    let mut sizes = Vec::with_capacity(layout.groups());
    for range in layout.ranges() {
        let group = &log_weights[range.clone()];
        let ratios = crate::weights::mean_one_ratios(group)
            .ok_or_else(|| SmcError::ContractViolation("group with no positive weight".into()))?;
        let local = match scheme {
            Scheme::MultinomialBootstrap => {
                let total = crate::weights::stable_sum(ratios.iter().copied());
                let normalized: Vec<f64> = ratios.iter().map(|w| w / total).collect();
                multinomial_unchecked(&normalized, group.len(), rng)
            }
            Scheme::ResidualBernoulli => residual_bernoulli_from_expected(&ratios, rng),
        };
        sizes.push(local.parents.len());
        parents.extend(local.parents.iter().map(|p| p + range.start));
    }
    Ok((Offspring::from_parents(parents, log_weights.len()), GroupLayout::from_sizes(&sizes)))
}
