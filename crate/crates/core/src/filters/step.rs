use crate::blockstruct::{BlockDiagMat, SmallMat, TallBlockMat};
use crate::model::CoupledSystem;
use crate::{Error, Real, Result};

/// The matrices one filter step reads. Borrowed so the EKF can swap in a
/// relinearized `H` and `R` without copying the rest of the system.
#[derive(Debug)]
pub struct StepModel<'a, T: Real> {
    pub transition: &'a BlockDiagMat<T>,
    pub observation: &'a BlockDiagMat<T>,
    pub process_cov: &'a BlockDiagMat<T>,
    pub meas_cov: &'a BlockDiagMat<T>,
    pub coupling: &'a TallBlockMat<T>,
    pub input_cov: &'a SmallMat<T>,
}

impl<T: Real> Clone for StepModel<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Real> Copy for StepModel<'_, T> {}

impl<'a, T: Real> From<&'a CoupledSystem<T>> for StepModel<'a, T> {
    fn from(sys: &'a CoupledSystem<T>) -> Self {
        Self {
            transition: sys.transition(),
            observation: sys.observation(),
            process_cov: sys.process_cov(),
            meas_cov: sys.meas_cov(),
            coupling: sys.coupling(),
            input_cov: sys.input_cov(),
        }
    }
}

/// Block sizes `(n, c, d, r)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub d: usize,
    pub r: usize,
}

impl<'a, T: Real> StepModel<'a, T> {
    /// Same model with `H` and `R` replaced.
    pub fn with_measurement<'b>(self, observation: &'b BlockDiagMat<T>, meas_cov: &'b BlockDiagMat<T>) -> StepModel<'b, T>
    where
        'a: 'b,
    {
        StepModel { observation, meas_cov, ..self }
    }

    pub fn dims(&self) -> Result<Dims> {
        let n = self.transition.n();
        let (c, c2) = self.transition.block_shape();
        let (d, hc) = self.observation.block_shape();
        let (gc, r) = self.coupling.block_shape();
        let ok = c == c2
            && hc == c
            && gc == c
            && self.observation.n() == n
            && self.process_cov.n() == n
            && self.meas_cov.n() == n
            && self.coupling.n() == n
            && self.process_cov.block_shape() == (c, c)
            && self.meas_cov.block_shape() == (d, d)
            && self.input_cov.shape() == (r, r);
        if !ok {
            return Err(Error::shape(format!(
                "inconsistent step model: F {}×{:?}, H {}×{:?}, V {:?}, R {:?}, G {}×{:?}, U {:?}",
                n,
                self.transition.block_shape(),
                self.observation.n(),
                self.observation.block_shape(),
                self.process_cov.block_shape(),
                self.meas_cov.block_shape(),
                self.coupling.n(),
                self.coupling.block_shape(),
                self.input_cov.shape()
            )));
        }
        Ok(Dims { n, c, d, r })
    }
}

/// What a step is given about the new measurement.
#[derive(Clone, Copy, Debug)]
pub enum Observation<'a, T> {
    /// Raw `y`; the innovation is `y − H F x̃`.
    Measured(&'a [T]),
    /// A precomputed innovation, as produced by a linearized measurement.
    Innovation(&'a [T]),
}

impl<T: Real> Observation<'_, T> {
    pub(crate) fn innovation(&self, model: &StepModel<'_, T>, pred: &[T]) -> Result<Vec<T>> {
        let expect = model.observation.n() * model.observation.brows();
        let v = match self {
            Self::Measured(y) | Self::Innovation(y) => *y,
        };
        if v.len() != expect {
            return Err(Error::shape(format!("observation has length {}, expected {expect}", v.len())));
        }
        Ok(match self {
            Self::Measured(y) => {
                let hx = model.observation.mul_vec(pred);
                y.iter().zip(hx).map(|(&a, b)| a - b).collect()
            }
            Self::Innovation(e) => e.to_vec(),
        })
    }
}

pub(crate) fn check_state_len<T>(x: &[T], dims: Dims) -> Result<()> {
    if x.len() != dims.n * dims.c {
        return Err(Error::shape(format!("state has length {}, expected {}", x.len(), dims.n * dims.c)));
    }
    Ok(())
}
