//! One-step filter updates.
//!
//! Every step is a pure function of a prior state, the model and one
//! observation, so several variants can branch from the same prior.

mod banded;
mod ekf;
mod fast;
mod full;
mod naive;
mod state;
mod step;

pub use banded::banded_kf_step;
pub use ekf::{ekf_linearize_poisson, ekf_poisson_step, Backend, EkfState, PoissonLinearization, DEFAULT_VARIANCE_FLOOR};
pub use fast::{bdkf_fast_step, coupling_posterior, FastStepWork, InputPosterior};
pub(crate) use fast::covariance_update;
pub use full::{full_kf_step, full_kf_step_blocked};
pub use naive::bdkf_naive_step;
pub use state::{BdFilterState, DenseFilterState};
pub use step::{Dims, Observation, StepModel};

#[cfg(test)]
mod tests;
