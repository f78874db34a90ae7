use crate::blockstruct::{BlockDiagMat, DenseMat};
use crate::{Error, Real, Result};

/// Estimate `x̃` and block-diagonal covariance `P̃` after `k` updates.
#[derive(Clone, Debug, PartialEq)]
pub struct BdFilterState<T: Real> {
    pub x: Vec<T>,
    pub p: BlockDiagMat<T>,
    pub k: usize,
}

impl<T: Real> BdFilterState<T> {
    pub fn new(x: Vec<T>, p: BlockDiagMat<T>) -> Result<Self> {
        let (r, c) = p.block_shape();
        if r != c || x.len() != p.n() * c {
            return Err(Error::shape(format!(
                "state of length {} with {} covariance blocks of {r}×{c}",
                x.len(),
                p.n()
            )));
        }
        Ok(Self { x, p, k: 0 })
    }

    pub fn to_dense(&self) -> DenseFilterState<T> {
        DenseFilterState { x: self.x.clone(), p: self.p.to_dense(), k: self.k }
    }
}

/// Estimate `x̂` and full covariance `P` after `k` updates.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseFilterState<T: Real> {
    pub x: Vec<T>,
    pub p: DenseMat<T>,
    pub k: usize,
}

impl<T: Real> DenseFilterState<T> {
    pub fn new(x: Vec<T>, p: DenseMat<T>) -> Result<Self> {
        if !p.is_square() || p.rows() != x.len() {
            return Err(Error::shape(format!("state of length {} with covariance {:?}", x.len(), p.shape())));
        }
        Ok(Self { x, p, k: 0 })
    }
}
