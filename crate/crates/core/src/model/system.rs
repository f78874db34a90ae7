use crate::blockstruct::{BlockDiagMat, DenseMat, SmallMat, TallBlockMat};
use crate::model::rng::psd_factor;
use crate::{Error, Real, Result};

/// One sub-system: `x⁺ = F x + v + G u`, `y = H x + w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Subsystem<T: Real> {
    pub transition: SmallMat<T>,
    pub observation: SmallMat<T>,
    pub process_cov: SmallMat<T>,
    pub meas_cov: SmallMat<T>,
    pub coupling: SmallMat<T>,
}

/// `n` sub-systems of state size `c` and measurement size `d`, all driven by
/// one `r`-dimensional input `u ~ N(0, U)`.
///
/// Matrices are time-invariant and stored block-diagonally (`F, H, V, R`) or
/// stacked (`G`). `V` and `R` only need to be PSD here; filters report a
/// singular innovation covariance if `R` turns out to be too degenerate.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledSystem<T: Real> {
    transition: BlockDiagMat<T>,
    observation: BlockDiagMat<T>,
    process_cov: BlockDiagMat<T>,
    meas_cov: BlockDiagMat<T>,
    coupling: TallBlockMat<T>,
    input_cov: SmallMat<T>,
}

/// Dense embeddings of a [`CoupledSystem`] for the oracle filters.
#[derive(Clone, Debug)]
pub struct DenseStack<T: Real> {
    pub transition: DenseMat<T>,
    pub observation: DenseMat<T>,
    pub process_cov: DenseMat<T>,
    pub meas_cov: DenseMat<T>,
    pub coupling: DenseMat<T>,
    /// `V + G U Gᵀ`
    pub total_process_cov: DenseMat<T>,
}

/// `dense_stack` refuses state dimensions above this unless overridden.
pub const DENSE_STATE_LIMIT: usize = 10_000;

fn check_cov<T: Real>(m: &DenseMat<T>, what: &str) -> Result<()> {
    psd_factor(m, what).map(|_| ())
}

impl<T: Real> CoupledSystem<T> {
    pub fn new(subsystems: &[Subsystem<T>], input_cov: SmallMat<T>) -> Result<Self> {
        let first = subsystems.first().ok_or_else(|| Error::Validation("system needs at least one sub-system".into()))?;
        let c = first.transition.rows();
        let d = first.observation.rows();
        let r = input_cov.rows();
        let expect = |m: &DenseMat<T>, shape: (usize, usize), name: &str, i: usize| -> Result<()> {
            if m.shape() != shape {
                return Err(Error::Validation(format!(
                    "sub-system {i}: {name} is {}×{}, expected {}×{}",
                    m.rows(),
                    m.cols(),
                    shape.0,
                    shape.1
                )));
            }
            Ok(())
        };
        if !input_cov.is_square() {
            return Err(Error::Validation(format!("U must be square, got {:?}", input_cov.shape())));
        }
        check_cov(&input_cov, "U")?;
        for (i, s) in subsystems.iter().enumerate() {
            expect(&s.transition, (c, c), "F", i)?;
            expect(&s.observation, (d, c), "H", i)?;
            expect(&s.process_cov, (c, c), "V", i)?;
            expect(&s.meas_cov, (d, d), "R", i)?;
            expect(&s.coupling, (c, r), "G", i)?;
            check_cov(&s.process_cov, &format!("sub-system {i}: V"))?;
            check_cov(&s.meas_cov, &format!("sub-system {i}: R"))?;
        }
        let collect = |f: fn(&Subsystem<T>) -> &SmallMat<T>| -> Vec<SmallMat<T>> { subsystems.iter().map(f).cloned().collect() };
        Ok(Self {
            transition: BlockDiagMat::from_blocks(&collect(|s| &s.transition))?,
            observation: BlockDiagMat::from_blocks(&collect(|s| &s.observation))?,
            process_cov: BlockDiagMat::from_blocks(&collect(|s| &s.process_cov))?,
            meas_cov: BlockDiagMat::from_blocks(&collect(|s| &s.meas_cov))?,
            coupling: TallBlockMat::from_blocks(&collect(|s| &s.coupling))?,
            input_cov,
        })
    }

    /// `n` copies of one sub-system.
    pub fn identical(sub: &Subsystem<T>, n: usize, input_cov: SmallMat<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("system needs at least one sub-system".into()));
        }
        let one = Self::new(std::slice::from_ref(sub), input_cov)?;
        Ok(Self {
            transition: BlockDiagMat::repeat(n, &sub.transition),
            observation: BlockDiagMat::repeat(n, &sub.observation),
            process_cov: BlockDiagMat::repeat(n, &sub.process_cov),
            meas_cov: BlockDiagMat::repeat(n, &sub.meas_cov),
            coupling: TallBlockMat::repeat(n, &sub.coupling),
            input_cov: one.input_cov,
        })
    }

    pub fn n(&self) -> usize {
        self.transition.n()
    }

    pub fn c(&self) -> usize {
        self.transition.brows()
    }

    pub fn d(&self) -> usize {
        self.observation.brows()
    }

    pub fn r(&self) -> usize {
        self.input_cov.rows()
    }

    pub fn state_dim(&self) -> usize {
        self.n() * self.c()
    }

    pub fn meas_dim(&self) -> usize {
        self.n() * self.d()
    }

    pub fn transition(&self) -> &BlockDiagMat<T> {
        &self.transition
    }

    pub fn observation(&self) -> &BlockDiagMat<T> {
        &self.observation
    }

    pub fn process_cov(&self) -> &BlockDiagMat<T> {
        &self.process_cov
    }

    pub fn meas_cov(&self) -> &BlockDiagMat<T> {
        &self.meas_cov
    }

    pub fn coupling(&self) -> &TallBlockMat<T> {
        &self.coupling
    }

    pub fn input_cov(&self) -> &SmallMat<T> {
        &self.input_cov
    }

    pub fn subsystem(&self, i: usize) -> Subsystem<T> {
        Subsystem {
            transition: self.transition.block_mat(i),
            observation: self.observation.block_mat(i),
            process_cov: self.process_cov.block_mat(i),
            meas_cov: self.meas_cov.block_mat(i),
            coupling: self.coupling.block_mat(i),
        }
    }

    pub fn subsystems(&self) -> Vec<Subsystem<T>> {
        (0..self.n()).map(|i| self.subsystem(i)).collect()
    }

    /// Same system with a different coupling-input covariance.
    pub fn with_input_cov(&self, input_cov: SmallMat<T>) -> Result<Self> {
        if input_cov.shape() != self.input_cov.shape() {
            return Err(Error::Validation(format!(
                "U must be {}×{}, got {:?}",
                self.r(),
                self.r(),
                input_cov.shape()
            )));
        }
        check_cov(&input_cov, "U")?;
        Ok(Self { input_cov, ..self.clone() })
    }

    /// Same system with per-step measurement matrices (EKF relinearization).
    /// Only shapes are checked.
    pub fn with_measurement(&self, observation: BlockDiagMat<T>, meas_cov: BlockDiagMat<T>) -> Result<Self> {
        if observation.n() != self.n()
            || observation.bcols() != self.c()
            || meas_cov.n() != self.n()
            || meas_cov.block_shape() != (observation.brows(), observation.brows())
        {
            return Err(Error::shape("replacement H/R blocks do not match the system"));
        }
        Ok(Self { observation, meas_cov, ..self.clone() })
    }

    /// Same system with different process noise blocks.
    pub fn with_process_cov(&self, process_cov: BlockDiagMat<T>) -> Result<Self> {
        if process_cov.n() != self.n() || process_cov.block_shape() != (self.c(), self.c()) {
            return Err(Error::shape("replacement V blocks do not match the system"));
        }
        Ok(Self { process_cov, ..self.clone() })
    }

    /// Sub-system `i` in isolation with process noise `Vᵢ + Gᵢ U Gᵢᵀ` and no
    /// coupling input.
    pub fn banded_block(&self, i: usize) -> Result<CoupledSystem<T>> {
        let mut sub = self.subsystem(i);
        sub.process_cov = &sub.process_cov + &sub.coupling.sandwich(&self.input_cov);
        sub.process_cov.symmetrize();
        CoupledSystem::new(&[sub], DenseMat::zeros(self.r(), self.r()))
    }

    /// Block `i` of `D{V + G U Gᵀ}`.
    pub fn banded_process_cov(&self) -> BlockDiagMat<T> {
        let mut out = self.process_cov.clone();
        for i in 0..self.n() {
            let g = self.coupling.block_mat(i);
            let mut q = &self.process_cov.block_mat(i) + &g.sandwich(&self.input_cov);
            q.symmetrize();
            out.set_block(i, &q).expect("block shape");
        }
        out
    }

    pub fn dense_stack(&self) -> Result<DenseStack<T>> {
        self.dense_stack_limited(DENSE_STATE_LIMIT)
    }

    pub fn dense_stack_limited(&self, limit: usize) -> Result<DenseStack<T>> {
        if self.state_dim() > limit {
            return Err(Error::SizeGuard { what: "dense_stack", dim: self.state_dim(), limit });
        }
        let process_cov = self.process_cov.to_dense();
        let coupling = self.coupling.to_dense();
        let total = (&process_cov + &coupling.sandwich(&self.input_cov)).symmetrized();
        Ok(DenseStack {
            transition: self.transition.to_dense(),
            observation: self.observation.to_dense(),
            process_cov,
            meas_cov: self.meas_cov.to_dense(),
            coupling,
            total_process_cov: total,
        })
    }

    /// Dense `V + G U Gᵀ` (guarded like [`Self::dense_stack`]).
    pub fn total_process_cov(&self) -> Result<DenseMat<T>> {
        if self.state_dim() > DENSE_STATE_LIMIT {
            return Err(Error::SizeGuard {
                what: "total_process_cov",
                dim: self.state_dim(),
                limit: DENSE_STATE_LIMIT,
            });
        }
        let g = self.coupling.to_dense();
        Ok((&self.process_cov.to_dense() + &g.sandwich(&self.input_cov)).symmetrized())
    }

    pub fn cast<U: Real>(&self) -> CoupledSystem<U> {
        CoupledSystem {
            transition: self.transition.cast(),
            observation: self.observation.cast(),
            process_cov: self.process_cov.cast(),
            meas_cov: self.meas_cov.cast(),
            coupling: self.coupling.cast(),
            input_cov: self.input_cov.cast(),
        }
    }
}
