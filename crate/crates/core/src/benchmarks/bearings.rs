//! Bearings-only tracking.
//!
//! State `(x₁, x₂, x₃, x₄)` = (horizontal position, velocity, vertical
//! position, velocity) with dynamics `X_t = Φ X_{t−1} + Γ z_t`,
//! `z_t ~ N(0, 0.001² I₂)`, and bearing observations
//! `Y_t = atan(x₃/x₁) + u_t`, `u_t ~ N(0, 0.005²)`.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SmcError};
use crate::model::StateSpaceModel;
use crate::rng::rng_from_seed;

pub type BearingsState = [f64; 4];

/// Noise scales and initial law `X_{1j} ~ N(initial_mean[j], initial_sd[j]²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingsParams {
    pub state_sd: f64,
    pub obs_sd: f64,
    pub initial_mean: [f64; 4],
    pub initial_sd: [f64; 4],
}

impl Default for BearingsParams {
    fn default() -> Self {
        BearingsParams {
            state_sd: 0.001,
            obs_sd: 0.005,
            initial_mean: [0.0, 0.0, 0.4, -0.05],
            initial_sd: [0.5, 0.005, 0.3, 0.01],
        }
    }
}

/// `Φ x + Γ z` with `Φ₁₂ = Φ₃₄ = 1`, `Γ₁₁ = Γ₃₂ = 0.5`, `Γ₂₁ = Γ₄₂ = 1`.
pub fn advance(x: &BearingsState, z: [f64; 2]) -> BearingsState {
    [x[0] + x[1] + 0.5 * z[0], x[1] + z[0], x[2] + x[3] + 0.5 * z[1], x[3] + z[1]]
}

pub fn bearing(x: &BearingsState) -> f64 {
    (x[2] / x[0]).atan()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BearingsData {
    pub x: Vec<BearingsState>,
    pub y: Vec<f64>,
}

fn gaussian(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

/// Simulates `T` stages from a given initial state.
pub fn simulate_bearings_from(
    initial: BearingsState,
    horizon: usize,
    params: &BearingsParams,
    rng: &mut dyn RngCore,
) -> BearingsData {
    let mut x = Vec::with_capacity(horizon);
    let mut y = Vec::with_capacity(horizon);
    let mut state = initial;
    for t in 0..horizon {
        if t > 0 {
            let z = [params.state_sd * gaussian(rng), params.state_sd * gaussian(rng)];
            state = advance(&state, z);
        }
        x.push(state);
        y.push(bearing(&state) + params.obs_sd * gaussian(rng));
    }
    BearingsData { x, y }
}

/// Simulates `(X, Y)` with the default parameters.
pub fn simulate_bearings(horizon: usize, seed: u64) -> Result<BearingsData> {
    simulate_bearings_with(horizon, &BearingsParams::default(), seed)
}

pub fn simulate_bearings_with(horizon: usize, params: &BearingsParams, seed: u64) -> Result<BearingsData> {
    if horizon == 0 {
        return Err(SmcError::InvalidConfiguration("horizon must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let initial = std::array::from_fn(|j| params.initial_mean[j] + params.initial_sd[j] * gaussian(&mut rng));
    Ok(simulate_bearings_from(initial, horizon, params, &mut rng))
}

/// Stage-1 proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialProposal {
    /// Positions drawn on the line of the first bearing (degenerate bivariate
    /// normal), velocities from the prior.
    #[default]
    Informed,
    /// `q₁ = p₁`, weight `g₁` ("boot(P)").
    Prior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BearingsModel {
    y: Vec<f64>,
    initial: InitialProposal,
    params: BearingsParams,
}

/// `(r, μ, τ)` of the informed proposal for a first bearing draw `r`.
fn informed_moments(r: f64) -> (f64, f64) {
    let denom = 0.36 + r * r;
    (0.4 * r / denom, 0.09 / denom)
}

/// Maps the standard normal draws `(ξ, ζ)` to `(x₁₁, x₁₃)` for first bearing `y1`.
pub fn informed_positions(y1: f64, xi: f64, zeta: f64) -> (f64, f64) {
    let r = (y1 + 0.005 * xi).tan();
    let (mu, tau) = informed_moments(r);
    let x11 = mu + tau.sqrt() * zeta;
    (x11, r * x11)
}

/// `|det ∂(x₁₁, x₁₃)/∂(ξ, ζ)| = 0.005 |x₁₁| √τ (1 + r²)`.
pub fn informed_jacobian(y1: f64, xi: f64, zeta: f64) -> f64 {
    let r = (y1 + 0.005 * xi).tan();
    let (_, tau) = informed_moments(r);
    let (x11, _) = informed_positions(y1, xi, zeta);
    0.005 * x11.abs() * tau.sqrt() * (1.0 + r * r)
}

impl BearingsModel {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.is_empty() || y.iter().any(|v| !v.is_finite()) {
            return Err(SmcError::InvalidConfiguration("need at least one finite bearing".into()));
        }
        Ok(BearingsModel {
            y,
            initial: InitialProposal::Informed,
            params: BearingsParams::default(),
        })
    }

    pub fn with_initial(mut self, initial: InitialProposal) -> Self {
        self.initial = initial;
        self
    }

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

    /// `−(Y_t − atan(x₃/x₁))² / (2 σ_u²)`; the Gaussian constant is dropped.
    pub fn log_emission(&self, stage: usize, x: &BearingsState) -> f64 {
        let resid = self.y[stage - 1] - bearing(x);
        let v = -resid * resid / (2.0 * self.params.obs_sd * self.params.obs_sd);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// Stage-1 informed weight, recovering `(r, ζ)` from the positions.
    fn informed_log_weight(&self, x: &BearingsState) -> f64 {
        let x11 = x[0];
        if x11 == 0.0 || !x11.is_finite() {
            return f64::NEG_INFINITY;
        }
        let r = x[2] / x11;
        let (mu, tau) = informed_moments(r);
        let zeta = (x11 - mu) / tau.sqrt();
        x11.abs().ln() + 0.5 * tau.ln() + (r * r).ln_1p() - x11 * x11 / (2.0 * 0.25) - (x[2] - 0.4).powi(2) / (2.0 * 0.09)
            + 0.5 * zeta * zeta
    }

    fn draw_prior_initial(&self, rng: &mut dyn RngCore) -> BearingsState {
        let p = &self.params;
        std::array::from_fn(|j| p.initial_mean[j] + p.initial_sd[j] * gaussian(rng))
    }
}

impl StateSpaceModel for BearingsModel {
    type Particle = BearingsState;

    fn horizon(&self) -> usize {
        self.y.len()
    }

    fn propose(&self, stage: usize, prefix: Option<&BearingsState>, rng: &mut dyn RngCore) -> BearingsState {
        match prefix {
            Some(prev) => {
                let z = [self.params.state_sd * gaussian(rng), self.params.state_sd * gaussian(rng)];
                advance(prev, z)
            }
            None => match self.initial {
                InitialProposal::Prior => self.draw_prior_initial(rng),
                InitialProposal::Informed => {
                    let xi = gaussian(rng);
                    let zeta = gaussian(rng);
                    let (x11, x13) = informed_positions(self.y[stage - 1], xi, zeta);
                    let mut x = self.draw_prior_initial(rng);
                    x[0] = x11;
                    x[2] = x13;
                    x
                }
            },
        }
    }

    fn log_weight(&self, stage: usize, prefix: Option<&BearingsState>, candidate: &BearingsState) -> f64 {
        match (prefix, self.initial) {
            (None, InitialProposal::Informed) => self.informed_log_weight(candidate),
            _ => self.log_emission(stage, candidate),
        }
    }

    fn functional_dim(&self) -> usize {
        2
    }

    fn functional(&self, particle: &BearingsState, component: usize) -> f64 {
        match component {
            0 => particle[0],
            _ => particle[2],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_matches_finite_differences() {
        let y1 = 0.7;
        for &(xi, zeta) in &[(0.3, -1.1), (-1.7, 0.4), (2.2, 2.0)] {
            let h = 1e-6;
            let (a_p, b_p) = informed_positions(y1, xi + h, zeta);
            let (a_m, b_m) = informed_positions(y1, xi - h, zeta);
            let (c_p, d_p) = informed_positions(y1, xi, zeta + h);
            let (c_m, d_m) = informed_positions(y1, xi, zeta - h);
            let j = [
                [(a_p - a_m) / (2.0 * h), (c_p - c_m) / (2.0 * h)],
                [(b_p - b_m) / (2.0 * h), (d_p - d_m) / (2.0 * h)],
            ];
            let det = (j[0][0] * j[1][1] - j[0][1] * j[1][0]).abs();
            let expected = informed_jacobian(y1, xi, zeta);
            assert!((det - expected).abs() <= 1e-6 * expected, "{det} vs {expected}");
        }
    }

    #[test]
    fn informed_particles_lie_on_the_bearing_line() {
        let model = BearingsModel::new(vec![0.5]).unwrap();
        let mut rng = rng_from_seed(2);
        for _ in 0..100 {
            let x = model.propose(1, None, &mut rng);
            assert!((bearing(&x) - 0.5).abs() < 0.05);
            assert!(model.log_weight(1, None, &x).is_finite());
        }
    }

    #[test]
    fn later_weights_ignore_velocities() {
        let model = BearingsModel::new(vec![0.5, 0.6]).unwrap();
        let a = [0.3, 0.01, 0.2, -0.04];
        let b = [0.3, -0.2, 0.2, 0.9];
        assert_eq!(model.log_weight(2, Some(&a), &a), model.log_weight(2, Some(&b), &b));
    }

    #[test]
    fn noiseless_trajectory_is_a_straight_line() {
        let params = BearingsParams {
            state_sd: 0.0,
            obs_sd: 0.0,
            initial_mean: [0.0; 4],
            initial_sd: [0.0; 4],
        };
        let mut rng = rng_from_seed(0);
        let d = simulate_bearings_from([0.1, 0.02, 0.4, -0.05], 10, &params, &mut rng);
        for (t, x) in d.x.iter().enumerate() {
            let t = t as f64;
            assert!((x[0] - (0.1 + 0.02 * t)).abs() < 1e-14);
            assert!((x[2] - (0.4 - 0.05 * t)).abs() < 1e-14);
        }
        for (x, y) in d.x.iter().zip(&d.y) {
            assert_eq!(*y, bearing(x));
        }
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        assert_eq!(simulate_bearings(24, 5).unwrap(), simulate_bearings(24, 5).unwrap());
    }
}
