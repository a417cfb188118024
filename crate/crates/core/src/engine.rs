//! The importance-sampling / resampling loop.
//!
//! A [`Population`] carries, per particle, the since-last-resampling
//! log-weight `log v`, the cumulative path log-weight `Σ_{k≤t} log w_k`, and
//! the ancestral origin (index of the stage-1 particle it descends from).
//! Population-level state is the running `Σ_{k≤t} log w̄_k`, the realized
//! resampling times and, when requested, the parent map of every resampling.
//!
//! The `H` quantities of the martingale representation are never stored:
//! `log H̃_t^i = Σ_{k≤t} log w̄_k − Σ_{k≤t} log w_k(path_i)` is rebuilt on demand.
//!
//! Draw order within a replication is fixed: all proposals of stage `t` in
//! particle order, then all resampling draws of stage `t`.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::estimators::{self, ComponentEstimate};
use crate::model::StateSpaceModel;
use crate::resampling::{self, GroupLayout, Offspring, ResamplePolicy, Scheme};
use crate::rng::rng_from_seed;
use crate::weights;

/// How a filter run is configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Initial population size `m`.
    pub particles: usize,
    pub policy: ResamplePolicy,
    pub scheme: Scheme,
    /// Number of sample-splitting groups; 0 disables splitting.
    pub split_groups: usize,
    /// Compute the Gilks–Berzuini genealogy estimator (records all parent maps).
    pub gilks_berzuini: bool,
}

impl FilterConfig {
    pub fn new(particles: usize, policy: ResamplePolicy, scheme: Scheme) -> Self {
        FilterConfig {
            particles,
            policy,
            scheme,
            split_groups: 0,
            gilks_berzuini: false,
        }
    }

    pub fn bootstrap_every_stage(particles: usize) -> Self {
        Self::new(particles, ResamplePolicy::Always, Scheme::MultinomialBootstrap)
    }

    pub fn with_split(mut self, groups: usize) -> Self {
        self.split_groups = groups;
        self
    }

    pub fn with_gilks_berzuini(mut self, on: bool) -> Self {
        self.gilks_berzuini = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(SmcError::InvalidConfiguration("need at least one particle".into()));
        }
        if self.split_groups == 1 {
            return Err(SmcError::InvalidConfiguration(
                "sample splitting needs at least 2 groups".into(),
            ));
        }
        if self.split_groups > self.particles {
            return Err(SmcError::InvalidConfiguration(format!(
                "cannot split {} particles into {} groups",
                self.particles, self.split_groups
            )));
        }
        if let ResamplePolicy::CvThreshold(c) = self.policy {
            ResamplePolicy::threshold(c)?;
        }
        Ok(())
    }
}

/// Parent indices of one resampling step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResamplingRecord {
    pub stage: usize,
    pub parents: Vec<usize>,
}

/// The live particle system.
#[derive(Debug, Clone)]
pub struct Population<P> {
    stage: usize,
    initial_size: usize,
    particles: Vec<P>,
    log_v: Vec<f64>,
    log_w: Vec<f64>,
    log_path_weight: Vec<f64>,
    origins: Vec<usize>,
    log_wbar_prefix: f64,
    log_wbar_trace: Vec<f64>,
    cv2_trace: Vec<f64>,
    size_trace: Vec<usize>,
    last_resample: usize,
    resample_times: Vec<usize>,
    genealogy: Option<Vec<ResamplingRecord>>,
    layout: Option<GroupLayout>,
}

impl<P: Clone> Population<P> {
    /// Stage-0 population of `m` particles with identity origins.
    pub fn init(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(SmcError::InvalidConfiguration("need at least one particle".into()));
        }
        Ok(Population {
            stage: 0,
            initial_size: m,
            particles: Vec::new(),
            log_v: vec![0.0; m],
            log_w: vec![0.0; m],
            log_path_weight: vec![0.0; m],
            origins: (0..m).collect(),
            log_wbar_prefix: 0.0,
            log_wbar_trace: Vec::new(),
            cv2_trace: Vec::new(),
            size_trace: Vec::new(),
            last_resample: 0,
            resample_times: Vec::new(),
            genealogy: None,
            layout: None,
        })
    }

    /// Records the parent map of every subsequent resampling.
    pub fn with_genealogy(mut self) -> Self {
        self.genealogy = Some(Vec::new());
        self
    }

    /// Splits the particles into `k` groups resampled independently.
    pub fn with_groups(mut self, k: usize) -> Result<Self> {
        self.layout = Some(GroupLayout::new(self.initial_size, k)?);
        Ok(self)
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    /// Current population size `M(t)`.
    pub fn size(&self) -> usize {
        self.origins.len()
    }

    pub fn initial_size(&self) -> usize {
        self.initial_size
    }

    pub fn particles(&self) -> &[P] {
        &self.particles
    }

    /// `log v_t` since the last resampling, per particle.
    pub fn log_v(&self) -> &[f64] {
        &self.log_v
    }

    /// Current-stage incremental log-weights `log w_t`.
    pub fn log_w(&self) -> &[f64] {
        &self.log_w
    }

    /// `Σ_{k≤t} log w_k` along each particle's path.
    pub fn log_path_weight(&self) -> &[f64] {
        &self.log_path_weight
    }

    /// Ancestral origins in `0..m` (0-based).
    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    /// `Σ_{k≤t} log w̄_k`.
    pub fn log_wbar_prefix(&self) -> f64 {
        self.log_wbar_prefix
    }

    pub fn log_wbar_trace(&self) -> &[f64] {
        &self.log_wbar_trace
    }

    pub fn cv2_trace(&self) -> &[f64] {
        &self.cv2_trace
    }

    pub fn size_trace(&self) -> &[usize] {
        &self.size_trace
    }

    /// Most recent resampling time, 0 if none.
    pub fn last_resample(&self) -> usize {
        self.last_resample
    }

    pub fn resample_times(&self) -> &[usize] {
        &self.resample_times
    }

    pub fn genealogy(&self) -> Option<&[ResamplingRecord]> {
        self.genealogy.as_deref()
    }

    pub fn layout(&self) -> Option<&GroupLayout> {
        self.layout.as_ref()
    }

    /// Normalized weights `V_t^i` over the current population.
    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        weights::normalize_log_weights(&self.log_v).ok_or(SmcError::DegenerateWeights { stage: self.stage })
    }

    /// `log H̃_t^i = Σ_{k≤t} log w̄_k − Σ_{k≤t} log w_k(X̃_t^i)` at the current stage.
    pub fn log_h_tilde(&self) -> Vec<f64> {
        self.log_path_weight.iter().map(|lp| self.log_wbar_prefix - lp).collect()
    }

    /// `log H_{t−1}^i` of the parent each current particle extends.
    pub fn log_h_parent(&self) -> Vec<f64> {
        let prev_prefix = self.log_wbar_prefix - self.log_wbar_trace.last().copied().unwrap_or(0.0);
        self.log_path_weight
            .iter()
            .zip(&self.log_w)
            .map(|(lp, lw)| prev_prefix - (lp - lw))
            .collect()
    }

    /// Extends every particle by one proposal draw (stage `t → t+1`).
    pub fn propagate<M>(&mut self, model: &M, rng: &mut dyn RngCore) -> Result<()>
    where
        M: StateSpaceModel<Particle = P>,
    {
        if self.stage >= model.horizon() {
            return Err(SmcError::ContractViolation(format!(
                "stage {} is already the horizon",
                self.stage
            )));
        }
        let stage = self.stage + 1;
        let n = self.size();
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let prefix = if stage == 1 { None } else { Some(&self.particles[i]) };
            let candidate = model.propose(stage, prefix, rng);
            let lw = model.log_weight(stage, prefix, &candidate);
            self.log_w[i] = if lw.is_nan() { f64::NEG_INFINITY } else { lw };
            next.push(candidate);
        }
        let log_wbar = weights::log_mean_exp(&self.log_w);
        if !log_wbar.is_finite() {
            return Err(SmcError::DegenerateWeights { stage });
        }
        for i in 0..n {
            self.log_v[i] += self.log_w[i];
            self.log_path_weight[i] += self.log_w[i];
        }
        self.particles = next;
        self.stage = stage;
        self.log_wbar_prefix += log_wbar;
        self.log_wbar_trace.push(log_wbar);
        let normalized = self.normalized_weights()?;
        self.cv2_trace.push(resampling::cv_squared_unchecked(&normalized));
        self.size_trace.push(n);
        Ok(())
    }

    /// Replaces the population by the offspring described by `offspring`.
    ///
    /// Each new particle inherits state, origin and path weight from its
    /// parent; `log v` restarts at zero.
    pub fn resample(&mut self, offspring: &Offspring) -> Result<()> {
        if offspring.parents.is_empty() {
            return Err(SmcError::PopulationExtinction { stage: self.stage });
        }
        if offspring.counts.len() != self.size() {
            return Err(SmcError::ContractViolation(format!(
                "offspring describes {} parents, population has {}",
                offspring.counts.len(),
                self.size()
            )));
        }
        let parents = &offspring.parents;
        self.particles = parents.iter().map(|&p| self.particles[p].clone()).collect();
        self.origins = parents.iter().map(|&p| self.origins[p]).collect();
        self.log_path_weight = parents.iter().map(|&p| self.log_path_weight[p]).collect();
        self.log_w = parents.iter().map(|&p| self.log_w[p]).collect();
        self.log_v = vec![0.0; parents.len()];
        if let Some(genealogy) = self.genealogy.as_mut() {
            genealogy.push(ResamplingRecord {
                stage: self.stage,
                parents: parents.clone(),
            });
        }
        self.resample_times.push(self.stage);
        self.last_resample = self.stage;
        Ok(())
    }

    /// Draws offspring with `scheme` (within groups when splitting) and resamples.
    pub fn resample_with(&mut self, scheme: Scheme, rng: &mut dyn RngCore) -> Result<()> {
        let ratios =
            weights::mean_one_ratios(&self.log_v).ok_or(SmcError::DegenerateWeights { stage: self.stage })?;
        let offspring = match &self.layout {
            Some(layout) => {
                let (offspring, next_layout) =
                    resampling::stratified_group_counts_log(&self.log_v, layout, scheme, rng)?;
                if next_layout.ranges().any(|r| r.is_empty()) {
                    return Err(SmcError::PopulationExtinction { stage: self.stage });
                }
                self.layout = Some(next_layout);
                offspring
            }
            None => match scheme {
                Scheme::MultinomialBootstrap => {
                    let total = weights::stable_sum(ratios.iter().copied());
                    let normalized: Vec<f64> = ratios.iter().map(|r| r / total).collect();
                    resampling::multinomial_counts(&normalized, self.size(), rng)?
                }
                // ratios are already M(t) V_t^i
                Scheme::ResidualBernoulli => resampling::residual_bernoulli_from_expected(&ratios, rng),
            },
        };
        self.resample(&offspring)
    }

    /// Index of the stage-`s` ancestor (among the pre-resampling particles of
    /// stage `s`) of every current particle. `s = 1` gives the origins.
    pub fn ancestor_labels(&self, s: usize) -> Result<Vec<usize>> {
        let genealogy = self.genealogy.as_ref().ok_or_else(|| {
            SmcError::InvalidConfiguration("ancestor labels need recorded genealogy".into())
        })?;
        if s == 0 || s > self.stage {
            return Err(SmcError::InvalidConfiguration(format!(
                "stage {s} is outside 1..={}",
                self.stage
            )));
        }
        let mut labels: Vec<usize> = (0..self.size()).collect();
        for record in genealogy.iter().rev().take_while(|r| r.stage >= s) {
            for l in labels.iter_mut() {
                *l = record.parents[*l];
            }
        }
        Ok(labels)
    }

    /// Calls `visit(s, labels, n_s)` for `s = T, T−1, …, 1`, where `n_s` is the
    /// population size at stage `s`. O(m T) overall.
    pub fn for_each_ancestor_labelling(&self, mut visit: impl FnMut(usize, &[usize], usize)) -> Result<()> {
        let genealogy = self.genealogy.as_ref().ok_or_else(|| {
            SmcError::InvalidConfiguration("ancestor labels need recorded genealogy".into())
        })?;
        let mut labels: Vec<usize> = (0..self.size()).collect();
        let mut records = genealogy.iter().rev().peekable();
        for s in (1..=self.stage).rev() {
            if let Some(record) = records.next_if(|r| r.stage == s) {
                for l in labels.iter_mut() {
                    *l = record.parents[*l];
                }
            }
            visit(s, &labels, self.size_trace[s - 1]);
        }
        Ok(())
    }
}

/// Per-run diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `cv_t²` of the pre-resampling weights at each stage.
    pub cv2: Vec<f64>,
    pub resample_times: Vec<usize>,
    /// Population size `M(t)` at each stage.
    pub sizes: Vec<usize>,
    /// `log w̄_t` at each stage.
    pub log_wbar: Vec<f64>,
}

/// Point estimates and standard-error ingredients of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutput {
    pub particles: usize,
    pub final_size: usize,
    pub components: Vec<ComponentEstimate>,
    pub diagnostics: Diagnostics,
}

impl FilterOutput {
    pub fn estimate(&self) -> f64 {
        self.components[0].estimate
    }

    /// `σ̂/√m` for the first component.
    pub fn se_ancestral(&self) -> Option<f64> {
        self.components[0].se_ancestral(self.particles)
    }
}

fn annotate<P>(err: SmcError, pop: &Population<P>) -> SmcError {
    match err {
        SmcError::Annotated { .. } => err,
        other => SmcError::Annotated {
            source: Box::new(other),
            cv2_trace: pop.cv2_trace.clone(),
        },
    }
}

/// Builds the stage-0 population a config asks for.
pub fn initial_population<P: Clone>(config: &FilterConfig) -> Result<Population<P>> {
    config.validate()?;
    let mut pop = Population::init(config.particles)?;
    if config.gilks_berzuini {
        pop = pop.with_genealogy();
    }
    if config.split_groups >= 2 {
        pop = pop.with_groups(config.split_groups)?;
    }
    Ok(pop)
}

/// Runs the filter to the horizon and returns the final (pre-resampling)
/// population. `observe` sees the population after every propagation,
/// before any resampling decision.
pub fn run_population<M, F>(
    model: &M,
    config: &FilterConfig,
    rng: &mut dyn RngCore,
    mut observe: F,
) -> Result<Population<M::Particle>>
where
    M: StateSpaceModel,
    F: FnMut(&Population<M::Particle>),
{
    let mut pop = initial_population(config)?;
    let horizon = model.horizon();
    for t in 1..=horizon {
        pop.propagate(model, rng).map_err(|e| annotate(e, &pop))?;
        observe(&pop);
        if t < horizon {
            let normalized = pop.normalized_weights().map_err(|e| annotate(e, &pop))?;
            if resampling::should_resample(config.policy, &normalized, t, horizon) {
                pop.resample_with(config.scheme, rng).map_err(|e| annotate(e, &pop))?;
            }
        }
    }
    Ok(pop)
}

/// Runs a full filter replication from `seed`.
pub fn run_filter<M: StateSpaceModel>(model: &M, config: &FilterConfig, seed: u64) -> Result<FilterOutput> {
    run_filter_full(model, config, seed).map(|(out, _)| out)
}

/// As [`run_filter`], also returning the final population.
pub fn run_filter_full<M: StateSpaceModel>(
    model: &M,
    config: &FilterConfig,
    seed: u64,
) -> Result<(FilterOutput, Population<M::Particle>)> {
    let mut rng = rng_from_seed(seed);
    let pop = run_population(model, config, &mut rng, |_| {})?;
    let output = summarize(model, config, &pop).map_err(|e| annotate(e, &pop))?;
    Ok((output, pop))
}

/// Evaluates all configured estimators on a final-stage population.
pub fn summarize<M: StateSpaceModel>(
    model: &M,
    config: &FilterConfig,
    pop: &Population<M::Particle>,
) -> Result<FilterOutput> {
    let components = (0..model.functional_dim())
        .map(|c| {
            let psi: Vec<f64> = pop.particles().iter().map(|p| model.functional(p, c)).collect();
            estimators::estimate_component(pop, &psi, config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FilterOutput {
        particles: pop.initial_size(),
        final_size: pop.size(),
        components,
        diagnostics: Diagnostics {
            cv2: pop.cv2_trace().to_vec(),
            resample_times: pop.resample_times().to_vec(),
            sizes: pop.size_trace().to_vec(),
            log_wbar: pop.log_wbar_trace().to_vec(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::two_state_example;

    #[test]
    fn init_rejects_empty_population() {
        assert!(Population::<u8>::init(0).is_err());
        let pop = Population::<u8>::init(4).unwrap();
        assert_eq!(pop.origins(), &[0, 1, 2, 3]);
        assert_eq!(pop.stage(), 0);
    }

    #[test]
    fn resample_carries_origins_and_resets_weights() {
        let model = two_state_example(3);
        let mut rng = rng_from_seed(1);
        let mut pop = Population::init(4).unwrap().with_genealogy();
        pop.propagate(&model, &mut rng).unwrap();
        let before = pop.particles().to_vec();
        let offspring = Offspring::from_parents(vec![2, 2, 0, 3], 4);
        pop.resample(&offspring).unwrap();
        assert_eq!(pop.origins(), &[2, 2, 0, 3]);
        assert_eq!(pop.particles()[1], before[2]);
        assert!(pop.log_v().iter().all(|&v| v == 0.0));
        assert_eq!(pop.resample_times(), &[1]);
        assert_eq!(pop.ancestor_labels(1).unwrap(), vec![2, 2, 0, 3]);
    }

    #[test]
    fn empty_offspring_is_extinction() {
        let model = two_state_example(2);
        let mut pop = Population::init(3).unwrap();
        pop.propagate(&model, &mut rng_from_seed(0)).unwrap();
        let err = pop.resample(&Offspring::from_parents(vec![], 3)).unwrap_err();
        assert_eq!(err, SmcError::PopulationExtinction { stage: 1 });
    }

    #[test]
    fn cannot_propagate_past_horizon() {
        let model = two_state_example(1);
        let mut pop = Population::init(3).unwrap();
        let mut rng = rng_from_seed(0);
        pop.propagate(&model, &mut rng).unwrap();
        assert!(matches!(pop.propagate(&model, &mut rng), Err(SmcError::ContractViolation(_))));
    }

    #[test]
    fn labels_compose_parent_maps() {
        let model = two_state_example(3);
        let mut rng = rng_from_seed(3);
        let mut pop = Population::init(3).unwrap().with_genealogy();
        pop.propagate(&model, &mut rng).unwrap();
        pop.resample(&Offspring::from_parents(vec![1, 1, 2], 3)).unwrap();
        pop.propagate(&model, &mut rng).unwrap();
        pop.resample(&Offspring::from_parents(vec![2, 0, 0], 3)).unwrap();
        pop.propagate(&model, &mut rng).unwrap();
        assert_eq!(pop.ancestor_labels(3).unwrap(), vec![0, 1, 2]);
        assert_eq!(pop.ancestor_labels(2).unwrap(), vec![2, 0, 0]);
        assert_eq!(pop.ancestor_labels(1).unwrap(), vec![2, 1, 1]);
        assert_eq!(pop.origins(), &[2, 1, 1]);
        let mut seen = Vec::new();
        pop.for_each_ancestor_labelling(|s, labels, n| seen.push((s, labels.to_vec(), n)))
            .unwrap();
        assert_eq!(
            seen,
            vec![(3, vec![0, 1, 2], 3), (2, vec![2, 0, 0], 3), (1, vec![2, 1, 1], 3)]
        );
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig::bootstrap_every_stage(0).validate().is_err());
        assert!(FilterConfig::bootstrap_every_stage(10).with_split(1).validate().is_err());
        assert!(FilterConfig::bootstrap_every_stage(3).with_split(4).validate().is_err());
        assert!(FilterConfig::bootstrap_every_stage(10).with_split(2).validate().is_ok());
    }
}
