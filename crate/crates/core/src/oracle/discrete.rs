//! Finite-state HMMs small enough to enumerate every path.
//!
//! Paths `x_{1:t}` are encoded as base-`d` integers with `x_1` as the least
//! significant digit, so the code of a length-`t` prefix of a path is the
//! path code modulo `d^t`.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::model::StateSpaceModel;
use crate::resampling::gamma_fn;
use crate::weights::{stable_sum, NeumaierSum};

pub const MAX_STATES: usize = 6;
pub const MAX_HORIZON: usize = 6;
const ROW_TOL: f64 = 1e-12;

/// A finite-state HMM with explicit proposal tables and a functional over full paths.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmm {
    states: usize,
    horizon: usize,
    initial: Vec<f64>,
    /// `transitions[t-2][prev][next]` for stages `t = 2..=T`.
    transitions: Vec<Vec<Vec<f64>>>,
    /// `emissions[t-1][s] = g_t(Y_t | s)` with the observation already applied.
    emissions: Vec<Vec<f64>>,
    proposal_initial: Vec<f64>,
    proposals: Vec<Vec<Vec<f64>>>,
    /// `ψ` indexed by full-path code.
    functional: Vec<f64>,
}

/// File form of a [`DiscreteHmm`] (time-homogeneous transition and proposal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteHmmSpec {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    /// One row per stage: `g_t(Y_t | s)` for each state `s`.
    pub emissions: Vec<Vec<f64>>,
    #[serde(default)]
    pub proposal_initial: Option<Vec<f64>>,
    #[serde(default)]
    pub proposal_transition: Option<Vec<Vec<f64>>>,
    /// `ψ(x_{1:T}) = state_values[x_T]`.
    #[serde(default)]
    pub state_values: Option<Vec<f64>>,
    /// `ψ` over all `d^T` path codes; overrides `state_values`.
    #[serde(default)]
    pub functional_table: Option<Vec<f64>>,
}

impl DiscreteHmmSpec {
    pub fn build(&self) -> Result<DiscreteHmm> {
        let horizon = self.emissions.len();
        let d = self.initial.len();
        let functional = match (&self.functional_table, &self.state_values) {
            (Some(table), _) => table.clone(),
            (None, Some(values)) => {
                if values.len() != d {
                    return Err(SmcError::InvalidConfiguration("state_values needs one entry per state".into()));
                }
                last_state_functional(d, horizon, values)
            }
            (None, None) => last_state_functional(d, horizon, &(0..d).map(|s| s as f64).collect::<Vec<_>>()),
        };
        DiscreteHmm::homogeneous(
            self.initial.clone(),
            self.transition.clone(),
            self.emissions.clone(),
            self.proposal_initial.clone().unwrap_or_else(|| self.initial.clone()),
            self.proposal_transition.clone().unwrap_or_else(|| self.transition.clone()),
            functional,
        )
    }
}

/// `ψ` table for `ψ(x_{1:T}) = values[x_T]`.
pub fn last_state_functional(states: usize, horizon: usize, values: &[f64]) -> Vec<f64> {
    let n = states.pow(horizon as u32);
    let top = states.pow(horizon as u32 - 1);
    (0..n).map(|code| values[code / top]).collect()
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(SmcError::InvalidConfiguration(format!("{what} has a negative or non-finite entry")));
    }
    let total = stable_sum(row.iter().copied());
    if (total - 1.0).abs() > ROW_TOL {
        return Err(SmcError::InvalidConfiguration(format!("{what} sums to {total}")));
    }
    Ok(())
}

fn check_support(p: &[f64], q: &[f64], what: &str) -> Result<()> {
    if p.iter().zip(q).any(|(p, q)| *p > 0.0 && *q <= 0.0) {
        return Err(SmcError::InvalidConfiguration(format!(
            "{what}: proposal must be positive wherever the transition is"
        )));
    }
    Ok(())
}

impl DiscreteHmm {
    /// Builds a model with stage-dependent matrices; `transitions` and
    /// `proposals` have `T − 1` entries each.
    pub fn new(
        initial: Vec<f64>,
        transitions: Vec<Vec<Vec<f64>>>,
        emissions: Vec<Vec<f64>>,
        proposal_initial: Vec<f64>,
        proposals: Vec<Vec<Vec<f64>>>,
        functional: Vec<f64>,
    ) -> Result<Self> {
        let d = initial.len();
        let horizon = emissions.len();
        if d == 0 || d > MAX_STATES {
            return Err(SmcError::InvalidConfiguration(format!("state count {d} outside 1..={MAX_STATES}")));
        }
        if horizon == 0 || horizon > MAX_HORIZON {
            return Err(SmcError::InvalidConfiguration(format!("horizon {horizon} outside 1..={MAX_HORIZON}")));
        }
        if transitions.len() != horizon - 1 || proposals.len() != horizon - 1 {
            return Err(SmcError::InvalidConfiguration("need T-1 transition and proposal matrices".into()));
        }
        check_distribution(&initial, "initial distribution")?;
        check_distribution(&proposal_initial, "initial proposal")?;
        if proposal_initial.len() != d {
            return Err(SmcError::InvalidConfiguration("initial proposal has the wrong length".into()));
        }
        check_support(&initial, &proposal_initial, "stage 1")?;
        for (t, (p, q)) in transitions.iter().zip(&proposals).enumerate() {
            if p.len() != d || q.len() != d {
                return Err(SmcError::InvalidConfiguration(format!("stage {} matrix is not {d}x{d}", t + 2)));
            }
            for (prow, qrow) in p.iter().zip(q) {
                if prow.len() != d || qrow.len() != d {
                    return Err(SmcError::InvalidConfiguration(format!("stage {} matrix is not {d}x{d}", t + 2)));
                }
                check_distribution(prow, "transition row")?;
                check_distribution(qrow, "proposal row")?;
                check_support(prow, qrow, &format!("stage {}", t + 2))?;
            }
        }
        for g in &emissions {
            if g.len() != d || g.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(SmcError::InvalidConfiguration("emission rows need one nonnegative entry per state".into()));
            }
        }
        if functional.len() != d.pow(horizon as u32) {
            return Err(SmcError::InvalidConfiguration(format!(
                "functional table needs {} entries",
                d.pow(horizon as u32)
            )));
        }
        Ok(DiscreteHmm {
            states: d,
            horizon,
            initial,
            transitions,
            emissions,
            proposal_initial,
            proposals,
            functional,
        })
    }

    /// Time-homogeneous transition and proposal matrices.
    pub fn homogeneous(
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
        emissions: Vec<Vec<f64>>,
        proposal_initial: Vec<f64>,
        proposal_transition: Vec<Vec<f64>>,
        functional: Vec<f64>,
    ) -> Result<Self> {
        let steps = emissions.len().saturating_sub(1);
        Self::new(
            initial,
            vec![transition; steps],
            emissions,
            proposal_initial,
            vec![proposal_transition; steps],
            functional,
        )
    }

    pub fn states(&self) -> usize {
        self.states
    }

    /// `d^t`.
    pub fn prefix_count(&self, t: usize) -> usize {
        self.states.pow(t as u32)
    }

    /// State at stage `t` (1-based) of a path code.
    pub fn state_at(&self, code: usize, t: usize) -> usize {
        (code / self.states.pow(t as u32 - 1)) % self.states
    }

    pub fn path_functional(&self, code: usize) -> f64 {
        self.functional[code]
    }

    /// Same model with a different path functional.
    pub fn with_functional(&self, functional: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        if functional.len() != self.functional.len() {
            return Err(SmcError::InvalidConfiguration("functional table has the wrong length".into()));
        }
        out.functional = functional;
        Ok(out)
    }

    /// Same model with the emission rows multiplied by `factor`.
    pub fn with_scaled_emissions(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.emissions {
            for g in row.iter_mut() {
                *g *= factor;
            }
        }
        out
    }

    /// `p_t(x | prev)`.
    pub fn transition_prob(&self, t: usize, prev: Option<usize>, x: usize) -> f64 {
        match prev {
            None => self.initial[x],
            Some(s) => self.transitions[t - 2][s][x],
        }
    }

    /// `q_t(x | prev)`.
    pub fn proposal_prob(&self, t: usize, prev: Option<usize>, x: usize) -> f64 {
        match prev {
            None => self.proposal_initial[x],
            Some(s) => self.proposals[t - 2][s][x],
        }
    }

    pub fn emission(&self, t: usize, x: usize) -> f64 {
        self.emissions[t - 1][x]
    }

    /// `w_t = p_t g_t / q_t` for the last step of a prefix.
    pub fn incremental_weight(&self, t: usize, prev: Option<usize>, x: usize) -> f64 {
        let pg = self.transition_prob(t, prev, x) * self.emission(t, x);
        if pg == 0.0 {
            return 0.0;
        }
        pg / self.proposal_prob(t, prev, x)
    }

    fn sample_categorical(row: &[f64], rng: &mut dyn RngCore) -> usize {
        let u = rng.random::<f64>();
        let mut acc = 0.0;
        for (i, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
    }

    /// Full enumeration of every quantity the limit theory needs.
    pub fn enumerate(&self) -> Result<Enumeration> {
        Enumeration::compute(self)
    }
}

/// A particle of a [`DiscreteHmm`]: the path code and its length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DiscretePath {
    pub code: usize,
    pub len: usize,
    pub last: usize,
}

impl StateSpaceModel for DiscreteHmm {
    type Particle = DiscretePath;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn propose(&self, stage: usize, prefix: Option<&DiscretePath>, rng: &mut dyn RngCore) -> DiscretePath {
        let x = match prefix {
            None => Self::sample_categorical(&self.proposal_initial, rng),
            Some(p) => Self::sample_categorical(&self.proposals[stage - 2][p.last], rng),
        };
        let (code, len) = prefix.map_or((0, 0), |p| (p.code, p.len));
        DiscretePath {
            code: code + x * self.states.pow(len as u32),
            len: len + 1,
            last: x,
        }
    }

    fn log_weight(&self, stage: usize, prefix: Option<&DiscretePath>, candidate: &DiscretePath) -> f64 {
        let prev = prefix.map(|p| p.last);
        let x = candidate.last;
        let pg = self.transition_prob(stage, prev, x) * self.emission(stage, x);
        if pg == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.transition_prob(stage, prev, x).ln() + self.emission(stage, x).ln() - self.proposal_prob(stage, prev, x).ln()
    }

    fn functional(&self, particle: &DiscretePath, _component: usize) -> f64 {
        self.functional[particle.code]
    }
}

/// Exact path-space quantities of a [`DiscreteHmm`].
///
/// Tables are indexed `[t][prefix code]` for `t = 0..=T` (the `t = 0` table
/// has the single empty prefix).
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub states: usize,
    pub horizon: usize,
    /// `∏_{k≤t} q_k` per prefix.
    pub q_prob: Vec<Vec<f64>>,
    /// `∏_{k≤t} w_k` per prefix.
    pub prod_w: Vec<Vec<f64>>,
    /// `∏_{k≤t} p_k g_k` per prefix.
    pub prod_pg: Vec<Vec<f64>>,
    /// `η_t = E_q ∏ w`, `η_0 = 1`.
    pub eta: Vec<f64>,
    /// `η_t` as the direct path sum of `∏ p g`.
    pub eta_direct: Vec<f64>,
    /// Posterior mean `ψ_T`.
    pub psi_t: f64,
    /// `E_q[(ψ − ψ_T) ∏_{k>t} w_k | x_{1:t}] / η_T`, so that `f_t = ∏_{k≤t} w_k · g_t`.
    pub future: Vec<Vec<f64>>,
    /// As `future` with `ψ` in place of `ψ − ψ_T`.
    pub future_tilde: Vec<Vec<f64>>,
}

impl Enumeration {
    fn compute(model: &DiscreteHmm) -> Result<Self> {
        let d = model.states;
        let big_t = model.horizon;
        let mut q_prob = vec![vec![1.0]];
        let mut prod_w = vec![vec![1.0]];
        let mut prod_pg = vec![vec![1.0]];
        for t in 1..=big_t {
            let n = d.pow(t as u32);
            let stride = d.pow(t as u32 - 1);
            let mut q = vec![0.0; n];
            let mut w = vec![0.0; n];
            let mut pg = vec![0.0; n];
            for code in 0..n {
                let prefix = code % stride;
                let x = code / stride;
                let prev = (t > 1).then(|| model.state_at(code, t - 1));
                q[code] = q_prob[t - 1][prefix] * model.proposal_prob(t, prev, x);
                w[code] = prod_w[t - 1][prefix] * model.incremental_weight(t, prev, x);
                pg[code] = prod_pg[t - 1][prefix] * model.transition_prob(t, prev, x) * model.emission(t, x);
            }
            q_prob.push(q);
            prod_w.push(w);
            prod_pg.push(pg);
        }
        let eta: Vec<f64> = (0..=big_t)
            .map(|t| stable_sum(q_prob[t].iter().zip(&prod_w[t]).map(|(q, w)| q * w)))
            .collect();
        let eta_direct: Vec<f64> = (0..=big_t).map(|t| stable_sum(prod_pg[t].iter().copied())).collect();
        let eta_t = eta[big_t];
        if !(eta_t > 0.0) {
            return Err(SmcError::InconsistentObservations);
        }
        let n_full = d.pow(big_t as u32);
        let psi_t = stable_sum((0..n_full).map(|c| model.functional[c] * prod_pg[big_t][c])) / eta_direct[big_t];

        // Direct conditional expectations: bucket every full path by its
        // prefix and divide by the prefix probability.
        let mut future = Vec::with_capacity(big_t + 1);
        let mut future_tilde = Vec::with_capacity(big_t + 1);
        for t in 0..=big_t {
            let n = d.pow(t as u32);
            let mut acc = vec![NeumaierSum::default(); n];
            let mut acc_tilde = vec![NeumaierSum::default(); n];
            for code in 0..n_full {
                let prefix = code % n;
                let qp = q_prob[big_t][code];
                if qp == 0.0 {
                    continue;
                }
                // ∏_{k>t} w_k = prod_w_T / prod_w_t when the prefix weight is positive
                let tail = tail_weight(model, code, t, big_t);
                let psi = model.functional[code];
                acc[prefix].add(qp * (psi - psi_t) * tail);
                acc_tilde[prefix].add(qp * psi * tail);
            }
            let mut g = vec![0.0; n];
            let mut gt = vec![0.0; n];
            for prefix in 0..n {
                let qp = q_prob[t][prefix];
                if qp > 0.0 {
                    g[prefix] = acc[prefix].total() / qp / eta_t;
                    gt[prefix] = acc_tilde[prefix].total() / qp / eta_t;
                }
            }
            future.push(g);
            future_tilde.push(gt);
        }
        Ok(Enumeration {
            states: d,
            horizon: big_t,
            q_prob,
            prod_w,
            prod_pg,
            eta,
            eta_direct,
            psi_t,
            future,
            future_tilde,
        })
    }

    /// `f_t(x_{1:t}) = E_q[(ψ − ψ_T) L_T | x_{1:t}]`.
    pub fn f(&self, t: usize, prefix: usize) -> f64 {
        self.prod_w[t][prefix] * self.future[t][prefix]
    }

    /// `f̃_t(x_{1:t}) = E_q[ψ L_T | x_{1:t}]`, with `f̃_0 = ψ_T`.
    pub fn f_tilde(&self, t: usize, prefix: usize) -> f64 {
        self.prod_w[t][prefix] * self.future_tilde[t][prefix]
    }

    /// `h*_t(x_{1:t}) = η_t / ∏_{k≤t} w_k` (infinite on zero-weight prefixes).
    pub fn h_star(&self, t: usize, prefix: usize) -> f64 {
        self.eta[t] / self.prod_w[t][prefix]
    }

    /// `L_T` on a full path.
    pub fn likelihood_ratio(&self, code: usize) -> f64 {
        self.prod_w[self.horizon][code] / self.eta[self.horizon]
    }

    /// `ζ_t = η_{t−1}/η_t`.
    pub fn zeta(&self, t: usize) -> f64 {
        self.eta[t - 1] / self.eta[t]
    }

    /// `Γ_t(x) = ∏_{k≤t} (w_k + w_k²)` per prefix.
    pub fn gamma_product(&self, model: &DiscreteHmm, t: usize) -> Vec<f64> {
        let n = self.states.pow(t as u32);
        (0..n)
            .map(|code| {
                (1..=t)
                    .map(|k| {
                        let prev = (k > 1).then(|| model.state_at(code, k - 1));
                        let w = model.incremental_weight(k, prev, model.state_at(code, k));
                        w + w * w
                    })
                    .product()
            })
            .collect()
    }

    /// `E_q` over stage-`t` prefixes.
    fn expect(&self, t: usize, mut value: impl FnMut(usize) -> f64) -> f64 {
        stable_sum(
            self.q_prob[t]
                .iter()
                .enumerate()
                .filter(|(_, q)| **q > 0.0)
                .map(|(code, q)| q * value(code)),
        )
    }

    /// `f_t² h*_s` on a stage-`t` prefix, `s ≤ t`, without forming `0 · ∞`.
    fn f_sq_h(&self, t: usize, code: usize, s: usize) -> f64 {
        let sub = code % self.states.pow(s as u32);
        let ws = self.prod_w[s][sub];
        if ws == 0.0 {
            return 0.0;
        }
        let wt = self.prod_w[t][code];
        // f_t² h*_s = (w_t g_t)² η_s / w_s
        (wt / ws) * wt * self.future[t][code].powi(2) * self.eta[s]
    }

    /// Asymptotic variance `σ²` for a resampling schedule (resampling times in
    /// `1..T`), for bootstrap or residual Bernoulli resampling. The empty
    /// schedule gives the importance-sampling variance; `1..T` gives the
    /// every-stage expression.
    pub fn sigma2(&self, schedule: &[usize], residual: bool) -> Result<Sigma2> {
        let big_t = self.horizon;
        if schedule.windows(2).any(|w| w[0] >= w[1]) || schedule.iter().any(|&s| s == 0 || s >= big_t) {
            return Err(SmcError::InvalidConfiguration(format!(
                "schedule {schedule:?} must be increasing within 1..{big_t}"
            )));
        }
        let mut blocks = vec![0];
        blocks.extend_from_slice(schedule);
        blocks.push(big_t);
        let mut terms = Vec::with_capacity(2 * blocks.len());
        for s in 1..blocks.len() {
            let (prev, cur) = (blocks[s - 1], blocks[s]);
            let stride_prev = self.states.pow(prev as u32);
            let propagation = self.expect(cur, |code| {
                let earlier = if prev == 0 { 0.0 } else { self.f_sq_h(prev, code % stride_prev, prev) };
                self.f_sq_h(cur, code, prev) - earlier
            });
            terms.push(propagation);
            if cur < big_t {
                let eta_ratio = self.eta[prev] / self.eta[cur];
                let resampling = self.expect(cur, |code| {
                    let base = self.f_sq_h(cur, code, cur);
                    if !residual || base == 0.0 {
                        return base;
                    }
                    let w_prev = self.prod_w[prev][code % stride_prev];
                    let block = eta_ratio * self.prod_w[cur][code] / w_prev;
                    gamma_fn(block).map_or(f64::NAN, |g| g * base)
                });
                terms.push(resampling);
            }
        }
        if let Some(index) = terms.iter().position(|t| !t.is_finite()) {
            return Err(SmcError::NonFiniteMoment { index: index + 1 });
        }
        Ok(Sigma2 { terms })
    }

    /// Every-stage bootstrap variance.
    pub fn sigma2_every_stage(&self) -> Result<Sigma2> {
        let schedule: Vec<usize> = (1..self.horizon).collect();
        self.sigma2(&schedule, false)
    }

    /// Limiting variance `σ²_C` of the likelihood-ratio estimator `ψ̃_T`
    /// under every-stage bootstrap resampling.
    pub fn sigma2_prototype(&self) -> Result<Sigma2> {
        let mut terms = Vec::with_capacity(2 * self.horizon);
        for t in 1..=self.horizon {
            let stride_prev = self.states.pow(t as u32 - 1);
            let odd = self.expect(t, |code| {
                let sub = code % stride_prev;
                let w_prev = self.prod_w[t - 1][sub];
                if w_prev == 0.0 {
                    return 0.0;
                }
                let h_prev = self.eta[t - 1] / w_prev;
                let ft = self.f_tilde(t, code);
                let ft_prev = if t == 1 { self.psi_t } else { self.f_tilde(t - 1, sub) };
                (ft * ft - ft_prev * ft_prev) * h_prev
            });
            terms.push(odd);
            if t < self.horizon {
                let even = self.expect(t, |code| {
                    // (f̃_t h*_t − f̃_0)² / h*_t with f̃_t h*_t = η_t g̃_t
                    let scaled = self.eta[t] * self.future_tilde[t][code];
                    (scaled - self.psi_t).powi(2) * self.prod_w[t][code] / self.eta[t]
                });
                terms.push(even);
            }
        }
        if let Some(index) = terms.iter().position(|t| !t.is_finite()) {
            return Err(SmcError::NonFiniteMoment { index: index + 1 });
        }
        Ok(Sigma2 { terms })
    }

    /// Limiting `cv²` at stage `t` when the last resampling was at `since`:
    /// `E_q[(∏_{since<k≤t} w*_k)² / h*_since] − 1`.
    pub fn limiting_cv2(&self, since: usize, t: usize) -> f64 {
        let stride = self.states.pow(since as u32);
        let eta_ratio = self.eta[since] / self.eta[t];
        self.expect(t, |code| {
            let ws = self.prod_w[since][code % stride];
            if ws == 0.0 {
                return 0.0;
            }
            let block = eta_ratio * self.prod_w[t][code] / ws;
            block * block * ws / self.eta[since]
        }) - 1.0
    }

    /// The deterministic limiting resampling schedule for threshold `c`.
    ///
    /// `c = 0` resamples at every stage `1..T`, as the inclusive trigger always
    /// fires. Otherwise a limiting `cv²` within `margin` of `c` is reported as
    /// an ambiguous schedule.
    pub fn tau_star(&self, c: f64, margin: f64) -> Result<Vec<usize>> {
        if c.is_nan() || c < 0.0 {
            return Err(SmcError::InvalidConfiguration(format!("threshold {c} must be nonnegative")));
        }
        if c == 0.0 {
            return Ok((1..self.horizon).collect());
        }
        let mut schedule = Vec::new();
        let mut since = 0;
        let mut t = 1;
        while t < self.horizon {
            let value = self.limiting_cv2(since, t);
            if (value - c).abs() < margin {
                return Err(SmcError::AmbiguousSchedule {
                    stage: t,
                    value,
                    threshold: c,
                    margin,
                });
            }
            if value >= c {
                schedule.push(t);
                since = t;
            }
            t += 1;
        }
        Ok(schedule)
    }
}

/// `∏_{t<k≤T} w_k` along a full path.
fn tail_weight(model: &DiscreteHmm, code: usize, t: usize, big_t: usize) -> f64 {
    (t + 1..=big_t)
        .map(|k| {
            let prev = (k > 1).then(|| model.state_at(code, k - 1));
            model.incremental_weight(k, prev, model.state_at(code, k))
        })
        .product()
}

/// Terms `σ_k²`, `k = 1..`, of an asymptotic variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sigma2 {
    pub terms: Vec<f64>,
}

impl Sigma2 {
    pub fn total(&self) -> f64 {
        stable_sum(self.terms.iter().copied())
    }
}

/// The two-state instance used by unit tests and acceptance suites:
/// `p = [[0.7, 0.3], [0.4, 0.6]]`, uniform initial law, a uniform proposal,
/// emissions `g(0|·) = (0.9, 0.2)` with alternating observations and `ψ` the
/// final state index.
pub fn two_state_example(horizon: usize) -> DiscreteHmm {
    let p = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
    let emissions: Vec<Vec<f64>> = (0..horizon)
        .map(|t| if t % 2 == 0 { vec![0.9, 0.2] } else { vec![0.1, 0.8] })
        .collect();
    DiscreteHmm::homogeneous(
        vec![0.5, 0.5],
        p,
        emissions,
        vec![0.5, 0.5],
        vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        last_state_functional(2, horizon, &[0.0, 1.0]),
    )
    .expect("valid example")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_stage_posterior() {
        let model = DiscreteHmm::homogeneous(
            vec![0.5, 0.5],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.9, 0.2]],
            vec![0.5, 0.5],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 1.0],
        )
        .unwrap();
        let e = model.enumerate().unwrap();
        assert!((e.psi_t - 2.0 / 11.0).abs() < 1e-15);
        // w_1(0) = 0.5 * 0.9 / 0.5
        assert!((model.incremental_weight(1, None, 0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn flat_emissions_give_prior_mean() {
        let model = DiscreteHmm::homogeneous(
            vec![0.2, 0.8],
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            vec![vec![0.3, 0.3]; 3],
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            last_state_functional(2, 3, &[0.0, 1.0]),
        )
        .unwrap();
        let e = model.enumerate().unwrap();
        // P(X_3 = 1) under the prior chain
        let p1 = [0.2, 0.8];
        let p2 = [p1[0] * 0.7 + p1[1] * 0.4, p1[0] * 0.3 + p1[1] * 0.6];
        let p3_1 = p2[0] * 0.3 + p2[1] * 0.6;
        assert!((e.psi_t - p3_1).abs() < 1e-14);
    }

    #[test]
    fn eta_routes_agree() {
        let e = two_state_example(4).enumerate().unwrap();
        for t in 0..=4 {
            assert!((e.eta[t] - e.eta_direct[t]).abs() <= 1e-12 * e.eta[t]);
        }
    }

    #[test]
    fn constant_functional_has_zero_variance() {
        let model = two_state_example(3).with_functional(vec![0.7; 8]).unwrap();
        let e = model.enumerate().unwrap();
        assert!(e.sigma2_every_stage().unwrap().total().abs() < 1e-15);
        for t in 1..=3 {
            assert!(e.future[t].iter().all(|g| g.abs() < 1e-15));
        }
    }

    #[test]
    fn rejects_bad_tables() {
        let bad_row = DiscreteHmm::homogeneous(
            vec![0.5, 0.5],
            vec![vec![0.7, 0.2], vec![0.4, 0.6]],
            vec![vec![1.0, 1.0]; 2],
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5]; 2],
            vec![0.0; 4],
        );
        assert!(bad_row.is_err());
        let bad_support = DiscreteHmm::homogeneous(
            vec![0.5, 0.5],
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            vec![vec![1.0, 1.0]; 2],
            vec![0.5, 0.5],
            vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            vec![0.0; 4],
        );
        assert!(bad_support.is_err());
    }

    #[test]
    fn zero_likelihood_is_inconsistent() {
        let model = DiscreteHmm::homogeneous(
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5]; 2],
            vec![vec![0.0, 0.0]],
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5]; 2],
            vec![0.0, 1.0],
        )
        .unwrap();
        assert_eq!(model.enumerate().unwrap_err(), SmcError::InconsistentObservations);
    }

    #[test]
    fn spec_file_round_trip() {
        let json = r#"{
            "initial": [0.5, 0.5],
            "transition": [[0.7, 0.3], [0.4, 0.6]],
            "emissions": [[0.9, 0.2], [0.1, 0.8]],
            "proposal_transition": [[0.5, 0.5], [0.5, 0.5]],
            "state_values": [0.0, 1.0]
        }"#;
        let spec: DiscreteHmmSpec = serde_json::from_str(json).unwrap();
        let model = spec.build().unwrap();
        assert_eq!(model, two_state_example(2));
    }

    #[test]
    fn tau_star_extremes() {
        let e = two_state_example(4).enumerate().unwrap();
        assert_eq!(e.tau_star(0.0, 1e-9).unwrap(), vec![1, 2, 3]);
        assert!(e.tau_star(1e6, 1e-9).unwrap().is_empty());
    }
}
