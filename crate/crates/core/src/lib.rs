//! Sequential Monte Carlo filters for hidden Markov models with consistent
//! standard errors.
//!
//! A filter run keeps, for every particle, the index of the first-generation
//! particle it descends from. Grouping the final weighted particles by that
//! ancestral origin gives a variance estimate of the filter's posterior-mean
//! estimate from a single run. Bootstrap (multinomial) and residual Bernoulli
//! resampling are supported, at every stage or whenever the squared
//! coefficient of variation of the weights reaches a threshold.
//!
//! ```
//! use smcvar::{oracle::two_state_example, run_filter, FilterConfig};
//!
//! let model = two_state_example(3);
//! let out = run_filter(&model, &FilterConfig::bootstrap_every_stage(2000), 7).unwrap();
//! let truth = model.enumerate().unwrap().psi_t;
//! assert!((out.estimate() - truth).abs() < 5.0 * out.se_ancestral().unwrap());
//! ```

pub mod acceptance;
pub mod benchmarks;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod model;
pub mod oracle;
pub mod replicate;
pub mod resampling;
pub mod rng;
pub mod stats;
pub mod weights;

pub use engine::{run_filter, run_filter_full, Diagnostics, FilterConfig, FilterOutput, Population};
pub use error::{Result, SmcError};
pub use estimators::ComponentEstimate;
pub use model::{GenericModel, StateSpaceModel};
pub use resampling::{ResamplePolicy, Scheme};
