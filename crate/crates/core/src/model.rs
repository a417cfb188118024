//! The model/proposal abstraction every filter run consumes.
//!
//! A model owns its observations and exposes, for each stage `t = 1..=T`,
//! a proposal sampler `q_t(· | x_{1:t-1})` and the log incremental weight
//! `log p_t(x_t | x_{t-1}) + log g_t(Y_t | x_t) - log q_t(x_t | x_{1:t-1})`.
//! Stages are 1-based throughout the crate.

use rand::RngCore;

use crate::error::{Result, SmcError};

/// A hidden Markov model bundled with an importance proposal.
///
/// `Particle` is whatever a particle needs to carry: a full path for generic
/// functionals, or a fixed-size sufficient statistic when the functional only
/// depends on one (the change-point model carries `(C_t, Σ Y, t)`).
///
/// Implementations must be read-only after construction; randomness is
/// always passed in.
pub trait StateSpaceModel: Sync {
    type Particle: Clone + Send + Sync;

    /// Number of stages `T`.
    fn horizon(&self) -> usize;

    /// Draws the stage-`stage` extension of `prefix` (`None` at stage 1).
    fn propose(
        &self,
        stage: usize,
        prefix: Option<&Self::Particle>,
        rng: &mut dyn RngCore,
    ) -> Self::Particle;

    /// `log w_stage` for the extension `candidate` of `prefix`. May be `-inf`.
    fn log_weight(
        &self,
        stage: usize,
        prefix: Option<&Self::Particle>,
        candidate: &Self::Particle,
    ) -> f64;

    /// Number of real components of the functional `ψ`.
    fn functional_dim(&self) -> usize {
        1
    }

    /// Component `component` of `ψ` evaluated on a particle at the final stage.
    fn functional(&self, particle: &Self::Particle, component: usize) -> f64;
}

type Sampler<S> = Box<dyn Fn(usize, Option<&S>, &mut dyn RngCore) -> S + Send + Sync>;
type TransitionLogPdf<S> = Box<dyn Fn(usize, Option<&S>, &S) -> f64 + Send + Sync>;
type EmissionLogPdf<S, Y> = Box<dyn Fn(usize, &Y, &S) -> f64 + Send + Sync>;
type ProposalSampler<S> = Box<dyn Fn(usize, &[S], &mut dyn RngCore) -> S + Send + Sync>;
type ProposalLogPdf<S> = Box<dyn Fn(usize, &[S], &S) -> f64 + Send + Sync>;
type PathFunctional<S> = Box<dyn Fn(&[S]) -> f64 + Send + Sync>;

/// A model assembled from closures, storing full paths.
///
/// The transition sampler is kept for simulation and for building
/// bootstrap (`q = p`) variants; the filter itself only draws from the proposal.
pub struct GenericModel<S, Y> {
    horizon: usize,
    observations: Vec<Y>,
    transition_sampler: Sampler<S>,
    transition_logpdf: TransitionLogPdf<S>,
    emission_logpdf: EmissionLogPdf<S, Y>,
    proposal_sampler: ProposalSampler<S>,
    proposal_logpdf: ProposalLogPdf<S>,
    functional: PathFunctional<S>,
}

impl<S, Y> GenericModel<S, Y>
where
    S: Clone + Send + Sync + 'static,
    Y: Send + Sync,
{
    /// Bundles the model pieces.
    ///
    /// Closures receive 1-based stages. The transition closures get the
    /// previous state (`None` at stage 1); the proposal closures get the full
    /// path prefix (empty at stage 1).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        horizon: usize,
        transition_sampler: impl Fn(usize, Option<&S>, &mut dyn RngCore) -> S + Send + Sync + 'static,
        transition_logpdf: impl Fn(usize, Option<&S>, &S) -> f64 + Send + Sync + 'static,
        emission_logpdf: impl Fn(usize, &Y, &S) -> f64 + Send + Sync + 'static,
        proposal_sampler: impl Fn(usize, &[S], &mut dyn RngCore) -> S + Send + Sync + 'static,
        proposal_logpdf: impl Fn(usize, &[S], &S) -> f64 + Send + Sync + 'static,
        observations: Vec<Y>,
        functional: impl Fn(&[S]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(SmcError::InvalidConfiguration("horizon must be at least 1".into()));
        }
        if observations.len() < horizon {
            return Err(SmcError::InvalidConfiguration(format!(
                "{} observations supplied for horizon {horizon}",
                observations.len()
            )));
        }
        Ok(Self {
            horizon,
            observations,
            transition_sampler: Box::new(transition_sampler),
            transition_logpdf: Box::new(transition_logpdf),
            emission_logpdf: Box::new(emission_logpdf),
            proposal_sampler: Box::new(proposal_sampler),
            proposal_logpdf: Box::new(proposal_logpdf),
            functional: Box::new(functional),
        })
    }

    pub fn observations(&self) -> &[Y] {
        &self.observations
    }

    /// Samples a hidden path from the transition law.
    pub fn sample_prior_path(&self, rng: &mut dyn RngCore) -> Vec<S> {
        let mut path: Vec<S> = Vec::with_capacity(self.horizon);
        for t in 1..=self.horizon {
            let next = (self.transition_sampler)(t, path.last(), rng);
            path.push(next);
        }
        path
    }
}

impl<S, Y> StateSpaceModel for GenericModel<S, Y>
where
    S: Clone + Send + Sync + 'static,
    Y: Send + Sync,
{
    type Particle = Vec<S>;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn propose(&self, stage: usize, prefix: Option<&Vec<S>>, rng: &mut dyn RngCore) -> Vec<S> {
        let prefix: &[S] = prefix.map(Vec::as_slice).unwrap_or(&[]);
        let next = (self.proposal_sampler)(stage, prefix, rng);
        let mut path = Vec::with_capacity(prefix.len() + 1);
        path.extend_from_slice(prefix);
        path.push(next);
        path
    }

    fn log_weight(&self, stage: usize, prefix: Option<&Vec<S>>, candidate: &Vec<S>) -> f64 {
        let prefix: &[S] = prefix.map(Vec::as_slice).unwrap_or(&[]);
        let x = candidate.last().expect("candidate path is non-empty");
        let log_p = (self.transition_logpdf)(stage, prefix.last(), x);
        let log_g = (self.emission_logpdf)(stage, &self.observations[stage - 1], x);
        if log_p == f64::NEG_INFINITY || log_g == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        log_p + log_g - (self.proposal_logpdf)(stage, prefix, x)
    }

    fn functional(&self, particle: &Vec<S>, _component: usize) -> f64 {
        (self.functional)(particle)
    }
}
