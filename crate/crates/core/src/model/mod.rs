//! Coupled linear-Gaussian systems, generators and simulation.

pub mod generators;
pub mod json;
pub mod rng;
mod simulate;
mod system;

pub use generators::{grid_width, make_identical_chain, make_random_system, make_speckle_system, SpeckleSystem};
pub use json::{GeneratorDoc, SubsystemDoc, SystemDoc};
pub use rng::RngSpec;
pub use simulate::{simulate, NoiseSampler, Trajectory};
pub(crate) use simulate::{observe, propagate};
pub use system::{CoupledSystem, DenseStack, Subsystem, DENSE_STATE_LIMIT};
