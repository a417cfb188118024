//! Rao–Blackwellized normal mean-shift (change-point) model.
//!
//! Particles carry only the change-point indicators through the sufficient
//! statistic `(C_t, Σ_{i=C_t}^t Y_i)`; the level is integrated out.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SmcError};
use crate::model::StateSpaceModel;
use crate::rng::rng_from_seed;
use crate::stats::log_normal_pdf;

/// How the indicator `I_t` is proposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndicatorProposal {
    /// `P(I_t = 1 | history, Y_t) = a/(a + b)`; the weight is the predictive
    /// density `a + b` of `Y_t`.
    #[default]
    ExactConditional,
    /// `I_t ~ Bernoulli(ρ)`; the weight is the segment predictive density.
    Prior,
}

/// Sufficient statistic of an indicator path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSummary {
    /// Most recent change point `C_t` (1-based stage).
    pub last_change: usize,
    /// `Σ_{i=C_t}^t Y_i`.
    pub segment_sum: f64,
    /// Current stage `t`.
    pub stage: usize,
}

impl SegmentSummary {
    pub fn segment_len(&self) -> usize {
        self.stage + 1 - self.last_change
    }

    /// `λ_t = 1/(t − C_t + 1 + 1/ξ)`.
    pub fn lambda(&self, xi: f64) -> f64 {
        1.0 / (self.segment_len() as f64 + 1.0 / xi)
    }

    /// `μ_t = λ_t Σ_{i=C_t}^t Y_i`.
    pub fn mu(&self, xi: f64) -> f64 {
        self.lambda(xi) * self.segment_sum
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangePointModel {
    rho: f64,
    xi: f64,
    y: Vec<f64>,
    proposal: IndicatorProposal,
}

impl ChangePointModel {
    pub fn new(rho: f64, xi: f64, y: Vec<f64>) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(SmcError::InvalidConfiguration(format!("rho = {rho} must lie in (0, 1)")));
        }
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(SmcError::InvalidConfiguration(format!("xi = {xi} must be positive")));
        }
        if y.is_empty() {
            return Err(SmcError::InvalidConfiguration("horizon must be positive".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SmcError::InvalidConfiguration("observations must be finite".into()));
        }
        Ok(ChangePointModel {
            rho,
            xi,
            y,
            proposal: IndicatorProposal::default(),
        })
    }

    pub fn with_proposal(mut self, proposal: IndicatorProposal) -> Self {
        self.proposal = proposal;
        self
    }

    /// Restricts the model to the first `horizon` observations.
    pub fn truncated(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 || horizon > self.y.len() {
            return Err(SmcError::InvalidConfiguration(format!("horizon {horizon} out of range")));
        }
        let mut out = self.clone();
        out.y.truncate(horizon);
        Ok(out)
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// `(log a, log b)` for stage `t ≥ 2` given the stage-`t−1` summary:
    /// `a = ρ φ_{0,1+ξ}(Y_t)`, `b = (1 − ρ) φ_{μ,1+λ}(Y_t)`.
    pub fn log_change_terms(&self, stage: usize, prev: &SegmentSummary) -> (f64, f64) {
        let y = self.y[stage - 1];
        let log_a = self.rho.ln() + log_normal_pdf(y, 0.0, 1.0 + self.xi);
        let log_b = (-self.rho).ln_1p() + log_normal_pdf(y, prev.mu(self.xi), 1.0 + prev.lambda(self.xi));
        (log_a, log_b)
    }

    fn extend(&self, stage: usize, prefix: Option<&SegmentSummary>, change: bool) -> SegmentSummary {
        let y = self.y[stage - 1];
        match prefix {
            Some(p) if !change => SegmentSummary {
                last_change: p.last_change,
                segment_sum: p.segment_sum + y,
                stage,
            },
            _ => SegmentSummary {
                last_change: stage,
                segment_sum: y,
                stage,
            },
        }
    }
}

impl StateSpaceModel for ChangePointModel {
    type Particle = SegmentSummary;

    fn horizon(&self) -> usize {
        self.y.len()
    }

    fn propose(&self, stage: usize, prefix: Option<&SegmentSummary>, rng: &mut dyn RngCore) -> SegmentSummary {
        let Some(prev) = prefix else {
            return self.extend(stage, None, true);
        };
        let change = match self.proposal {
            IndicatorProposal::ExactConditional => {
                let (log_a, log_b) = self.log_change_terms(stage, prev);
                // a/(a+b) = 1/(1 + e^{log b − log a})
                let p = 1.0 / (1.0 + (log_b - log_a).exp());
                rng.random::<f64>() < p
            }
            IndicatorProposal::Prior => rng.random::<f64>() < self.rho,
        };
        self.extend(stage, Some(prev), change)
    }

    fn log_weight(&self, stage: usize, prefix: Option<&SegmentSummary>, candidate: &SegmentSummary) -> f64 {
        let y = self.y[stage - 1];
        let Some(prev) = prefix else {
            return log_normal_pdf(y, 0.0, 1.0 + self.xi);
        };
        match self.proposal {
            IndicatorProposal::ExactConditional => {
                let (log_a, log_b) = self.log_change_terms(stage, prev);
                let hi = log_a.max(log_b);
                hi + ((log_a - hi).exp() + (log_b - hi).exp()).ln()
            }
            IndicatorProposal::Prior => {
                if candidate.last_change == stage {
                    log_normal_pdf(y, 0.0, 1.0 + self.xi)
                } else {
                    log_normal_pdf(y, prev.mu(self.xi), 1.0 + prev.lambda(self.xi))
                }
            }
        }
    }

    fn functional(&self, particle: &SegmentSummary, _component: usize) -> f64 {
        particle.mu(self.xi)
    }
}

/// Simulated hidden levels and observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangePointData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Draws `(X, Y)` from the mean-shift model with `X_1 ~ N(0, ξ)`.
pub fn simulate_changepoint(horizon: usize, rho: f64, xi: f64, seed: u64) -> Result<ChangePointData> {
    if !(0.0..=1.0).contains(&rho) || !(xi > 0.0) {
        return Err(SmcError::InvalidConfiguration(format!("bad parameters rho={rho}, xi={xi}")));
    }
    let mut rng = rng_from_seed(seed);
    let level = Normal::new(0.0, xi.sqrt()).map_err(|e| SmcError::InvalidConfiguration(e.to_string()))?;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = Vec::with_capacity(horizon);
    let mut y = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let xt = if t == 0 || rng.random::<f64>() < rho {
            level.sample(&mut rng)
        } else {
            x[t - 1]
        };
        x.push(xt);
        y.push(xt + noise.sample(&mut rng));
    }
    Ok(ChangePointData { x, y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn model() -> ChangePointModel {
        ChangePointModel::new(0.01, 1.0, vec![0.2, 1.4, -0.3, 2.5, 2.7]).unwrap()
    }

    #[test]
    fn weight_does_not_depend_on_drawn_indicator() {
        let m = model();
        let prev = SegmentSummary {
            last_change: 1,
            segment_sum: 0.2 + 1.4,
            stage: 2,
        };
        let stay = m.extend(3, Some(&prev), false);
        let change = m.extend(3, Some(&prev), true);
        assert_eq!(m.log_weight(3, Some(&prev), &stay), m.log_weight(3, Some(&prev), &change));
    }

    #[test]
    fn change_probability_is_small_at_the_segment_mean() {
        let m0 = model();
        let prev = SegmentSummary {
            last_change: 1,
            segment_sum: 0.2 + 1.4,
            stage: 2,
        };
        let mut y = m0.observations().to_vec();
        y[2] = prev.mu(1.0);
        let m = ChangePointModel::new(0.01, 1.0, y.clone()).unwrap();
        let (log_a, log_b) = m.log_change_terms(3, &prev);
        let p_change = 1.0 / (1.0 + (log_b - log_a).exp());
        let bound = 0.01 * log_normal_pdf(y[2], 0.0, 2.0).exp() / log_b.exp();
        assert!(p_change < bound);
        assert!(log_b > log_a);
    }

    #[test]
    fn summary_matches_recomputation() {
        let m = model();
        let mut rng = rng_from_seed(11);
        let mut particle = m.propose(1, None, &mut rng);
        let mut indicators = vec![true];
        for t in 2..=m.horizon() {
            let next = m.propose(t, Some(&particle), &mut rng);
            indicators.push(next.last_change == t);
            particle = next;
            let c = indicators.iter().rposition(|&i| i).unwrap() + 1;
            let segment: f64 = m.observations()[c - 1..t].iter().sum();
            let lambda = 1.0 / ((t - c + 1) as f64 + 1.0);
            assert_eq!(particle.last_change, c);
            assert!((particle.mu(1.0) - lambda * segment).abs() < 1e-10);
            assert!(particle.lambda(1.0) > 0.0 && particle.lambda(1.0) <= 1.0);
        }
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let a = simulate_changepoint(50, 0.1, 1.0, 9).unwrap();
        assert_eq!(a, simulate_changepoint(50, 0.1, 1.0, 9).unwrap());
        assert_ne!(a, simulate_changepoint(50, 0.1, 1.0, 10).unwrap());
    }

    #[test]
    fn certain_change_gives_fresh_levels() {
        let d = simulate_changepoint(200, 1.0, 1.0, 1).unwrap();
        let repeats = d.x.windows(2).filter(|w| w[0] == w[1]).count();
        assert_eq!(repeats, 0);
    }
}
