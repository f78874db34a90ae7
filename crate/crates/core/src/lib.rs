//! Kalman filtering for many small linear systems driven by one shared,
//! low-dimensional Gaussian input.
//!
//! The block-diagonal filter keeps only the per-sub-system covariance
//! blocks and evaluates each step in time linear in the number of
//! sub-systems. Dense and banded filters are included as references.
//!
//! All numerics are generic over [`Real`]; the aliases below fix the
//! scalar for the common cases.

pub mod blockstruct;
mod error;
pub mod experiments;
pub mod filters;
pub mod model;
mod scalar;
pub mod spectral;
pub mod steady_state;

pub use error::{Error, Result};
pub use scalar::Real;

pub type DenseMatF64 = blockstruct::DenseMat<f64>;
pub type BlockDiagF64 = blockstruct::BlockDiagMat<f64>;
pub type SystemF64 = model::CoupledSystem<f64>;
pub type BdStateF64 = filters::BdFilterState<f64>;
pub type DenseStateF64 = filters::DenseFilterState<f64>;

pub type DenseMatF32 = blockstruct::DenseMat<f32>;
pub type BlockDiagF32 = blockstruct::BlockDiagMat<f32>;
pub type SystemF32 = model::CoupledSystem<f32>;
pub type BdStateF32 = filters::BdFilterState<f32>;
pub type DenseStateF32 = filters::DenseFilterState<f32>;
