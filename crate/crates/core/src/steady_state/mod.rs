//! Fixed points of the filter covariance recursions and the perturbation
//! bounds that relate them.
//!
//! Every solver iterates the corresponding filter recursion without data
//! until the relative change of the predict-step covariance drops below
//! `tol`.

mod bounds;
mod lyapunov;
mod riccati;
mod types;

pub use bounds::{
    alpha_constants, compute_c, prop2_analysis, prop2_bounds, AlphaConstants, CouplingSummary, Prop2Analysis, Prop2Report,
};
pub use lyapunov::true_error_cov;
pub use riccati::{banded_steady, bd_riccati_map, solve_bd_dare, solve_dare};
pub use types::{Covariance, Gain, IterOptions, SteadyStateResult};

#[cfg(test)]
mod tests;
