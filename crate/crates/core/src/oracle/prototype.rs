//! Exhaustive enumeration of an every-stage bootstrap filter's randomness.
//!
//! Every atom (all proposal draws and all multinomial parent vectors) is
//! visited with its exact probability, which gives exact moments of the
//! likelihood-ratio estimator `ψ̃_T` and of the ratio estimator `ψ̂_T`.

use crate::error::{Result, SmcError};
use crate::oracle::discrete::{DiscreteHmm, Enumeration};
use crate::weights::NeumaierSum;

/// Default cap on the number of enumerated atoms.
pub const ATOM_BUDGET: u128 = 1_000_000;

/// Exact moments from [`exhaustive_prototype_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeMoments {
    pub particles: usize,
    pub psi_t: f64,
    pub mean_tilde: f64,
    pub second_tilde: f64,
    pub mean_hat: f64,
    pub second_hat: f64,
    /// Probability mass visited; 1 up to rounding.
    pub total_probability: f64,
    pub atoms: u128,
}

impl PrototypeMoments {
    pub fn var_tilde(&self) -> f64 {
        self.second_tilde - self.mean_tilde * self.mean_tilde
    }

    /// `m Var(ψ̃_T)`, which tends to `σ²_C`.
    pub fn scaled_var_tilde(&self) -> f64 {
        self.particles as f64 * self.var_tilde()
    }

    /// Exact bias `E[ψ̂_T] − ψ_T`.
    pub fn bias_hat(&self) -> f64 {
        self.mean_hat - self.psi_t
    }

    /// `|E[ψ̃_T] − ψ_T|`.
    pub fn unbiasedness_gap(&self) -> f64 {
        (self.mean_tilde - self.psi_t).abs()
    }
}

/// Atom count `(d^m)^T (m^m)^(T−1)`.
pub fn atom_count(states: usize, horizon: usize, m: usize) -> u128 {
    let proposals = (states as u128).saturating_pow((m * horizon) as u32);
    let resamplings = (m as u128).saturating_pow((m * (horizon - 1)) as u32);
    proposals.saturating_mul(resamplings)
}

struct Walker<'a> {
    model: &'a DiscreteHmm,
    exact: &'a Enumeration,
    m: usize,
    horizon: usize,
    mean_tilde: NeumaierSum,
    second_tilde: NeumaierSum,
    mean_hat: NeumaierSum,
    second_hat: NeumaierSum,
    mass: NeumaierSum,
}

impl Walker<'_> {
    /// `paths[i]` are the resampled stage-`t−1` path codes, `wbar_prod` is
    /// `w̄_1 ⋯ w̄_{t−1}`.
    fn stage(&mut self, t: usize, paths: &[usize], prob: f64, wbar_prod: f64) -> Result<()> {
        let d = self.model.states();
        let stride = d.pow(t as u32 - 1);
        let combos = d.pow(self.m as u32);
        let mut new_paths = vec![0usize; self.m];
        let mut w = vec![0.0; self.m];
        for combo in 0..combos {
            let mut p = prob;
            let mut rest = combo;
            for i in 0..self.m {
                let x = rest % d;
                rest /= d;
                let prev = (t > 1).then(|| self.model.state_at(paths[i], t - 1));
                p *= self.model.proposal_prob(t, prev, x);
                new_paths[i] = paths[i] + x * stride;
                w[i] = self.model.incremental_weight(t, prev, x);
            }
            if p == 0.0 {
                continue;
            }
            let total_w: f64 = w.iter().sum();
            if !(total_w > 0.0) {
                return Err(SmcError::DegenerateWeights { stage: t });
            }
            let wbar = total_w / self.m as f64;
            if t == self.horizon {
                self.finish(paths, &new_paths, &w, p, wbar_prod);
            } else {
                self.resample(t, &new_paths, &w, total_w, p, wbar_prod * wbar)?;
            }
        }
        Ok(())
    }

    fn resample(&mut self, t: usize, paths: &[usize], w: &[f64], total_w: f64, prob: f64, wbar_prod: f64) -> Result<()> {
        let m = self.m;
        let outcomes = m.pow(m as u32);
        let mut chosen = vec![0usize; m];
        for outcome in 0..outcomes {
            let mut p = prob;
            let mut rest = outcome;
            for slot in chosen.iter_mut() {
                let b = rest % m;
                rest /= m;
                p *= w[b] / total_w;
                *slot = paths[b];
            }
            if p > 0.0 {
                self.stage(t + 1, &chosen, p, wbar_prod)?;
            }
        }
        Ok(())
    }

    fn finish(&mut self, parents: &[usize], paths: &[usize], w: &[f64], prob: f64, wbar_prod: f64) {
        let big_t = self.horizon;
        let e = self.exact;
        let prev_stride = self.model.prefix_count(big_t - 1);
        let mut tilde = 0.0;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.m {
            let psi = self.model.path_functional(paths[i]);
            // H_{T−1} = w̄_1⋯w̄_{T−1} / ∏_{k<T} w_k(X_{T−1})
            let h_parent = if big_t == 1 {
                1.0
            } else {
                wbar_prod / e.prod_w[big_t - 1][parents[i] % prev_stride]
            };
            tilde += e.likelihood_ratio(paths[i]) * psi * h_parent;
            num += psi * w[i];
            den += w[i];
        }
        let tilde = tilde / self.m as f64;
        let hat = num / den;
        self.mean_tilde.add(prob * tilde);
        self.second_tilde.add(prob * tilde * tilde);
        self.mean_hat.add(prob * hat);
        self.second_hat.add(prob * hat * hat);
        self.mass.add(prob);
    }
}

/// Exact `E[ψ̃_T]`, `E[ψ̂_T]` and second moments for every-stage bootstrap
/// resampling with `m` particles; refuses when the atom count exceeds `budget`.
pub fn exhaustive_prototype_check(model: &DiscreteHmm, m: usize, budget: u128) -> Result<PrototypeMoments> {
    use crate::model::StateSpaceModel;
    if m == 0 {
        return Err(SmcError::InvalidConfiguration("m must be positive".into()));
    }
    let horizon = model.horizon();
    let atoms = atom_count(model.states(), horizon, m);
    if atoms > budget {
        return Err(SmcError::EnumerationBudget { atoms, budget });
    }
    let exact = model.enumerate()?;
    let mut walker = Walker {
        model,
        exact: &exact,
        m,
        horizon,
        mean_tilde: NeumaierSum::default(),
        second_tilde: NeumaierSum::default(),
        mean_hat: NeumaierSum::default(),
        second_hat: NeumaierSum::default(),
        mass: NeumaierSum::default(),
    };
    walker.stage(1, &vec![0; m], 1.0, 1.0)?;
    Ok(PrototypeMoments {
        particles: m,
        psi_t: exact.psi_t,
        mean_tilde: walker.mean_tilde.total(),
        second_tilde: walker.second_tilde.total(),
        mean_hat: walker.mean_hat.total(),
        second_hat: walker.second_hat.total(),
        total_probability: walker.mass.total(),
        atoms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::discrete::two_state_example;

    #[test]
    fn single_draw_identity() {
        let model = two_state_example(1);
        let r = exhaustive_prototype_check(&model, 1, ATOM_BUDGET).unwrap();
        assert!(r.unbiasedness_gap() < 1e-15);
        assert!((r.total_probability - 1.0).abs() < 1e-15);
    }

    #[test]
    fn budget_is_a_hard_cap() {
        let model = two_state_example(6);
        let err = exhaustive_prototype_check(&model, 3, ATOM_BUDGET).unwrap_err();
        assert!(matches!(err, SmcError::EnumerationBudget { .. }));
    }

    #[test]
    fn atom_counts() {
        assert_eq!(atom_count(2, 2, 2), 16 * 4);
        assert_eq!(atom_count(2, 2, 3), 64 * 27);
    }
}
