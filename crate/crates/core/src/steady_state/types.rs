use serde::{Deserialize, Serialize};

use crate::blockstruct::{kernels, pairwise_sum, BlockDiagMat, DenseMat, SmallMat, TallBlockMat};
use crate::filters::FastStepWork;
use crate::model::CoupledSystem;
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IterOptions {
    /// Relative change of the predict-step covariance that ends the iteration.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IterOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 200_000 }
    }
}

impl IterOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Validation(format!(
                "need tol > 0 and max_iter ≥ 1 (got {}, {})",
                self.tol, self.max_iter
            )));
        }
        Ok(())
    }
}

/// A steady covariance in whichever form the solver produces.
#[derive(Clone, Debug, PartialEq)]
pub enum Covariance<T: Real> {
    Dense(DenseMat<T>),
    Block(BlockDiagMat<T>),
    /// `blocks + G U Gᵀ`, the shape of a block-diagonal filter's prediction.
    BlockLowRank {
        blocks: BlockDiagMat<T>,
        coupling: TallBlockMat<T>,
        input_cov: SmallMat<T>,
    },
}

impl<T: Real> Covariance<T> {
    pub fn dim(&self) -> usize {
        match self {
            Self::Dense(m) => m.rows(),
            Self::Block(b) | Self::BlockLowRank { blocks: b, .. } => b.dense_shape().0,
        }
    }

    pub fn to_dense(&self) -> DenseMat<T> {
        match self {
            Self::Dense(m) => m.clone(),
            Self::Block(b) => b.to_dense(),
            Self::BlockLowRank { blocks, coupling, input_cov } => {
                let g = coupling.to_dense();
                (&blocks.to_dense() + &g.sandwich(input_cov)).symmetrized()
            }
        }
    }

    /// Diagonal block `i` of size `c×c`.
    pub fn diag_block(&self, i: usize, c: usize) -> DenseMat<T> {
        match self {
            Self::Dense(m) => m.submatrix(i * c, i * c, c, c),
            Self::Block(b) => b.block_mat(i),
            Self::BlockLowRank { blocks, coupling, input_cov } => {
                let g = coupling.block_mat(i);
                &blocks.block_mat(i) + &g.sandwich(input_cov)
            }
        }
    }

    /// Frobenius norm. The low-rank form is evaluated without densifying:
    /// `‖B + GUGᵀ‖² = ‖B‖² + 2 Σᵢ tr(Gᵢᵀ Bᵢ Gᵢ U) + tr(U W U W)`, `W = GᵀG`.
    pub fn frobenius_norm(&self) -> f64 {
        match self {
            Self::Dense(m) => m.frobenius_norm().as_f64(),
            Self::Block(b) => b.frobenius_norm().as_f64(),
            Self::BlockLowRank { blocks, coupling, input_cov } => {
                let (c, r) = coupling.block_shape();
                let n = blocks.n();
                let mut cross = vec![T::zero(); n * r * r];
                let mut gram = vec![T::zero(); n * r * r];
                let mut bg = vec![T::zero(); c * r];
                for i in 0..n {
                    let g = coupling.block(i);
                    kernels::mul_nn(blocks.block(i), g, &mut bg, c, c, r);
                    kernels::mul_tn(g, &bg, &mut cross[i * r * r..(i + 1) * r * r], r, c, r);
                    kernels::mul_tn(g, g, &mut gram[i * r * r..(i + 1) * r * r], r, c, r);
                }
                let gbg = DenseMat::from_row_major(r, r, pairwise_sum(&mut cross, r * r).to_vec()).expect("r×r");
                let w = DenseMat::from_row_major(r, r, pairwise_sum(&mut gram, r * r).to_vec()).expect("r×r");
                let uw = input_cov.matmul(&w);
                let low = uw.matmul(&uw).trace().as_f64();
                let mixed = gbg.matmul(input_cov).trace().as_f64();
                let b = blocks.frobenius_norm().as_f64();
                (b * b + 2.0 * mixed + low).max(0.0).sqrt()
            }
        }
    }
}

/// A steady gain.
#[derive(Clone, Debug)]
pub enum Gain<T: Real> {
    Dense(DenseMat<T>),
    /// Per-block `c×d` gains of decoupled filters.
    Block(BlockDiagMat<T>),
    Factored(Box<FastStepWork<T>>),
}

impl<T: Real> Gain<T> {
    pub fn apply(&self, z: &[T]) -> Vec<T> {
        match self {
            Self::Dense(k) => k.mul_vec(z),
            Self::Block(k) => k.mul_vec(z),
            Self::Factored(w) => w.gain_action(z),
        }
    }

    pub fn to_dense(&self) -> DenseMat<T> {
        match self {
            Self::Dense(k) => k.clone(),
            Self::Block(k) => k.to_dense(),
            Self::Factored(w) => w.dense_gain(),
        }
    }

    /// `F_c = (I − K H) F`, dense.
    pub fn closed_loop(&self, sys: &CoupledSystem<T>) -> DenseMat<T> {
        let f = sys.transition().to_dense();
        let hf = sys.observation().mul_dense(&f);
        &f - &self.to_dense().matmul(&hf)
    }
}

/// Fixed point of one of the covariance recursions.
#[derive(Clone, Debug)]
pub struct SteadyStateResult<T: Real> {
    /// Predict-step covariance.
    pub p_minus: Covariance<T>,
    /// Update-step covariance.
    pub p_plus: Covariance<T>,
    pub gain: Gain<T>,
    pub iterations: usize,
    /// Relative change at the last iteration.
    pub residual: f64,
    pub converged: bool,
    /// Whether every `(F⁽ⁱ⁾, H⁽ⁱ⁾)` pair passed the detectability check.
    pub detectable: bool,
}

impl<T: Real> SteadyStateResult<T> {
    /// `F_c`, formed densely from the gain.
    pub fn closed_loop(&self, sys: &CoupledSystem<T>) -> DenseMat<T> {
        self.gain.closed_loop(sys)
    }
}

/// Keeps the last few residuals for the non-convergence report.
pub(crate) struct ResidualTail {
    buf: Vec<f64>,
}

impl ResidualTail {
    const KEEP: usize = 10;

    pub(crate) fn new() -> Self {
        Self { buf: Vec::with_capacity(Self::KEEP) }
    }

    pub(crate) fn push(&mut self, r: f64) {
        if self.buf.len() == Self::KEEP {
            self.buf.remove(0);
        }
        self.buf.push(r);
    }

    pub(crate) fn into_error(self, what: &'static str, iterations: usize) -> Error {
        Error::NonConvergence {
            what,
            iterations,
            residual: self.buf.last().copied().unwrap_or(f64::NAN),
            history: self.buf,
        }
    }
}
