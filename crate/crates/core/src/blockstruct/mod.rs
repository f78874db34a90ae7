//! Block-structured dense linear algebra for `n` small blocks.

mod blocks;
mod dense;
pub mod kernels;
mod ops;

pub use blocks::{BlockDiagMat, TallBlockMat};
pub use dense::{Cholesky, DenseMat, SmallMat};
pub use ops::{
    bd_chol_solve, bd_sandwich, block_fro_distance, project_d, tall_reduce, BlockCholesky, BlockRhs, MatRef,
};
pub(crate) use ops::pairwise_sum;
