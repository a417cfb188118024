//! Exact reference values for small or analytically tractable models.

pub mod changepoint;
pub mod discrete;
pub mod prototype;

pub use changepoint::{changepoint_enumerated_mean, changepoint_exact_mean};
pub use discrete::{last_state_functional, two_state_example, DiscreteHmm, DiscreteHmmSpec, DiscretePath, Enumeration, Sigma2};
pub use prototype::{atom_count, exhaustive_prototype_check, PrototypeMoments, ATOM_BUDGET};

use crate::error::Result;

/// Posterior mean `ψ_T` and normalizing constants `η_1..η_T`.
pub fn exact_posterior(model: &DiscreteHmm) -> Result<(f64, Vec<f64>)> {
    let e = model.enumerate()?;
    Ok((e.psi_t, e.eta[1..].to_vec()))
}
