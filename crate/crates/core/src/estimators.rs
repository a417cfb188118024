//! Point estimates and standard-error estimators for a final-stage population.
//!
//! All estimators work on the pre-resampling particles of the final stage,
//! weighted by `v_T` (the weight accumulated since the last resampling):
//!
//! * [`point_estimate`]: `Σ_i V_T^i ψ_i`.
//! * [`var_ancestral`]: group the weighted residuals `(v_i/v̄)(ψ_i − μ)` by
//!   ancestral origin, square the group sums and average over the `m` origins.
//! * [`var_sample_split`]: the same grouping inside `k` independently
//!   resampled groups, centred at the out-of-group estimate.
//! * [`var_gilks_berzuini`]: `m⁻² Σ_{k,ℓ} N^{k,ℓ} r_k r_ℓ` with `N^{k,ℓ}` the
//!   number of shared ancestors, evaluated stage by stage from ancestor labels.
//!
//! Group sums are accumulated per label and reduced in ascending label order,
//! so results do not depend on how particles are stored.

use serde::{Deserialize, Serialize};

use crate::engine::{FilterConfig, Population};
use crate::error::{Result, SmcError};
use crate::resampling::GroupLayout;
use crate::weights::{self, NeumaierSum};

/// Estimates for one component of the functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentEstimate {
    pub estimate: f64,
    /// `σ̂²(ψ̂)`; `None` when `m = 1`.
    pub var_ancestral: Option<f64>,
    /// `σ̂²_SP`, when sample splitting was configured.
    pub var_split: Option<f64>,
    /// `V̂_T`, already on the scale of `Var(ψ̂)`.
    pub var_gb: Option<f64>,
}

impl ComponentEstimate {
    /// `σ̂/√m`.
    pub fn se_ancestral(&self, m: usize) -> Option<f64> {
        self.var_ancestral.map(|v| (v / m as f64).sqrt())
    }

    pub fn se_split(&self, m: usize) -> Option<f64> {
        self.var_split.map(|v| (v / m as f64).sqrt())
    }

    pub fn se_gb(&self) -> Option<f64> {
        self.var_gb.map(f64::sqrt)
    }
}

fn check_lengths(log_v: &[f64], psi: &[f64]) -> Result<()> {
    if log_v.is_empty() || log_v.len() != psi.len() {
        return Err(SmcError::ContractViolation(format!(
            "{} weights for {} functional values",
            log_v.len(),
            psi.len()
        )));
    }
    Ok(())
}

/// `Σ_i V^i ψ_i` with `V` normalized from `log_v`.
///
/// Computed as `ψ_ref + Σ V^i (ψ_i − ψ_ref)` so a constant functional is
/// returned exactly.
pub fn point_estimate(log_v: &[f64], psi: &[f64]) -> Result<f64> {
    check_lengths(log_v, psi)?;
    let v = weights::normalize_log_weights(log_v).ok_or(SmcError::DegenerateWeights { stage: 0 })?;
    let reference = psi[0];
    let shift = weights::stable_sum(v.iter().zip(psi).map(|(w, p)| w * (p - reference)));
    Ok(reference + shift)
}

/// Mean of values, exact for constant input.
fn exact_mean(values: &[f64]) -> f64 {
    let reference = values[0];
    reference + weights::stable_sum(values.iter().map(|x| x - reference)) / values.len() as f64
}

/// Ancestral-origin variance estimate
/// `m⁻¹ Σ_j ( Σ_{i: A^i = j} (v_i/v̄)(ψ_i − μ) )²`, with `m = n_origins`.
pub fn var_ancestral(log_v: &[f64], origins: &[usize], psi: &[f64], mu: f64, n_origins: usize) -> Result<f64> {
    check_lengths(log_v, psi)?;
    if origins.len() != psi.len() {
        return Err(SmcError::ContractViolation("origins length mismatch".into()));
    }
    let ratios = weights::mean_one_ratios(log_v).ok_or(SmcError::DegenerateWeights { stage: 0 })?;
    let mut groups = vec![NeumaierSum::default(); n_origins];
    for ((&a, &r), &p) in origins.iter().zip(&ratios).zip(psi) {
        let slot = groups
            .get_mut(a)
            .ok_or_else(|| SmcError::ContractViolation(format!("origin {a} out of range")))?;
        slot.add(r * (p - mu));
    }
    let ss = weights::stable_sum(groups.iter().map(|g| g.total().powi(2)));
    Ok(ss / n_origins as f64)
}

/// Group decomposition: total mean-one weight per origin. Sums to `M`.
pub fn origin_group_weights(log_v: &[f64], origins: &[usize], n_origins: usize) -> Result<Vec<f64>> {
    let ratios = weights::mean_one_ratios(log_v).ok_or(SmcError::DegenerateWeights { stage: 0 })?;
    let mut groups = vec![NeumaierSum::default(); n_origins];
    for (&a, &r) in origins.iter().zip(&ratios) {
        groups[a].add(r);
    }
    Ok(groups.iter().map(NeumaierSum::total).collect())
}

/// Split-sample estimate and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitEstimate {
    /// `k⁻¹ Σ_j ψ̂^j`.
    pub estimate: f64,
    /// Per-group estimates `ψ̂^j`.
    pub group_estimates: Vec<f64>,
    /// `σ̂²_SP`.
    pub variance: f64,
}

/// Sample-splitting estimator over `layout`'s groups.
///
/// Within group `j` the weights are normalized by the group mean `v̄^j` and
/// residuals are centred at the mean of the other groups' estimates. Squared
/// origin-group sums are divided by `m = n_origins`.
pub fn var_sample_split(
    log_v: &[f64],
    origins: &[usize],
    psi: &[f64],
    layout: &GroupLayout,
    n_origins: usize,
) -> Result<SplitEstimate> {
    check_lengths(log_v, psi)?;
    let k = layout.groups();
    if k < 2 {
        return Err(SmcError::InvalidConfiguration(
            "sample splitting needs at least 2 groups".into(),
        ));
    }
    if layout.total() != psi.len() {
        return Err(SmcError::ContractViolation("group layout does not cover the population".into()));
    }
    let group_estimates = layout
        .ranges()
        .map(|r| point_estimate(&log_v[r.clone()], &psi[r]))
        .collect::<Result<Vec<_>>>()?;
    let reference = group_estimates[0];
    let total_shift: f64 = weights::stable_sum(group_estimates.iter().map(|g| g - reference));
    let mut groups = vec![NeumaierSum::default(); n_origins];
    for (j, range) in layout.ranges().enumerate() {
        let out_of_group = reference + (total_shift - (group_estimates[j] - reference)) / (k - 1) as f64;
        let ratios = weights::mean_one_ratios(&log_v[range.clone()]).ok_or(SmcError::DegenerateWeights { stage: 0 })?;
        for (offset, r) in ratios.iter().enumerate() {
            let i = range.start + offset;
            let slot = groups
                .get_mut(origins[i])
                .ok_or_else(|| SmcError::ContractViolation(format!("origin {} out of range", origins[i])))?;
            slot.add(r * (psi[i] - out_of_group));
        }
    }
    let variance = weights::stable_sum(groups.iter().map(|g| g.total().powi(2))) / n_origins as f64;
    Ok(SplitEstimate {
        estimate: exact_mean(&group_estimates),
        group_estimates,
        variance,
    })
}

/// Weighted residuals `r_k = (v_k/v̄)(ψ_k − μ)`.
pub fn weighted_residuals(log_v: &[f64], psi: &[f64], mu: f64) -> Result<Vec<f64>> {
    check_lengths(log_v, psi)?;
    let ratios = weights::mean_one_ratios(log_v).ok_or(SmcError::DegenerateWeights { stage: 0 })?;
    Ok(ratios.iter().zip(psi).map(|(r, p)| r * (p - mu)).collect())
}

/// Gilks–Berzuini estimate `m_T⁻² Σ_s Σ_{groups at s} (Σ_{k in group} r_k)²`,
/// with groups the stage-`s` ancestor labels.
pub fn var_gilks_berzuini<P: Clone>(pop: &Population<P>, residuals: &[f64]) -> Result<f64> {
    if residuals.len() != pop.size() {
        return Err(SmcError::ContractViolation("residual length mismatch".into()));
    }
    let mut total = NeumaierSum::default();
    let mut scratch: Vec<NeumaierSum> = Vec::new();
    pop.for_each_ancestor_labelling(|_s, labels, n_s| {
        scratch.clear();
        scratch.resize(n_s, NeumaierSum::default());
        for (&l, &r) in labels.iter().zip(residuals) {
            scratch[l].add(r);
        }
        for g in &scratch {
            total.add(g.total().powi(2));
        }
    })?;
    let m = pop.size() as f64;
    Ok(total.total() / (m * m))
}

/// All configured estimators for one functional component, centred at the plug-in estimate.
pub fn estimate_component<P: Clone>(pop: &Population<P>, psi: &[f64], config: &FilterConfig) -> Result<ComponentEstimate> {
    let log_v = pop.log_v();
    let m = pop.initial_size();
    let split = match pop.layout() {
        Some(layout) if config.split_groups >= 2 => Some(var_sample_split(log_v, pop.origins(), psi, layout, m)?),
        _ => None,
    };
    let estimate = match &split {
        Some(s) => s.estimate,
        None => point_estimate(log_v, psi)?,
    };
    let var_ancestral = if m >= 2 {
        Some(var_ancestral(log_v, pop.origins(), psi, estimate, m)?)
    } else {
        None
    };
    let var_gb = if config.gilks_berzuini && m >= 2 {
        let residuals = weighted_residuals(log_v, psi, estimate)?;
        Some(var_gilks_berzuini(pop, &residuals)?)
    } else {
        None
    };
    Ok(ComponentEstimate {
        estimate,
        var_ancestral,
        var_split: split.map(|s| s.variance),
        var_gb,
    })
}

/// Self-normalized importance sampling in one pass, independent of the
/// filter's bookkeeping: `Σ exp(l_i) ψ_i / Σ exp(l_i)`.
pub fn self_normalized_reference(log_weights: &[f64], psi: &[f64]) -> f64 {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (&l, &p) in log_weights.iter().zip(psi) {
        let w = (l - max).exp();
        num += w * p;
        den += w;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_functional_is_exact() {
        let log_v = [0.3, -1.2, 2.5, 0.0];
        let origins = [0, 0, 2, 3];
        let psi = [0.1; 4];
        assert_eq!(point_estimate(&log_v, &psi).unwrap(), 0.1);
        assert_eq!(var_ancestral(&log_v, &origins, &psi, 0.1, 4).unwrap(), 0.0);
        let layout = GroupLayout::new(4, 2).unwrap();
        let split = var_sample_split(&log_v, &origins, &psi, &layout, 4).unwrap();
        assert_eq!(split.estimate, 0.1);
        assert_eq!(split.variance, 0.0);
    }

    #[test]
    fn singleton_origins_reduce_to_sum_of_squares() {
        let log_v = [0.0, 1.0f64.ln(), 3.0f64.ln()];
        let psi = [1.0, 2.0, 4.0];
        let mu = 2.5;
        let got = var_ancestral(&log_v, &[0, 1, 2], &psi, mu, 3).unwrap();
        let w = [1.0, 1.0, 3.0];
        let wbar = 5.0 / 3.0;
        let want: f64 = w.iter().zip(&psi).map(|(wi, p)| (wi / wbar * (p - mu)).powi(2)).sum::<f64>() / 3.0;
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn split_needs_two_groups() {
        let layout = GroupLayout::new(4, 1).unwrap();
        let r = var_sample_split(&[0.0; 4], &[0, 1, 2, 3], &[1.0; 4], &layout, 4);
        assert!(matches!(r, Err(SmcError::InvalidConfiguration(_))));
    }

    #[test]
    fn group_weights_sum_to_population_size() {
        let log_v = [0.2, -0.7, 1.1, 0.4, -2.0];
        let g = origin_group_weights(&log_v, &[1, 1, 0, 4, 1], 5).unwrap();
        assert!((g.iter().sum::<f64>() - 5.0).abs() < 1e-12);
    }
}
