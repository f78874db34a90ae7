use crate::blockstruct::BlockDiagMat;
use crate::filters::step::{Observation, StepModel};
use crate::filters::{banded_kf_step, bdkf_fast_step, full_kf_step_blocked, BdFilterState, DenseFilterState};
use crate::{Error, Real, Result};

/// Lower bound on the Poisson measurement variance, in photons².
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1.0;

/// Per-pixel linearization of `y ~ Poisson(|E + ΔE|²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonLinearization<T: Real> {
    /// `1×2` blocks `2·[Re(E+ΔE), Im(E+ΔE)]`.
    pub observation: BlockDiagMat<T>,
    /// `1×1` blocks `max(|E+ΔE|², floor)`.
    pub meas_cov: BlockDiagMat<T>,
    /// `|E+ΔE|²`
    pub predicted: Vec<T>,
}

/// Fields are stored per pixel as `[Re, Im]` pairs.
pub fn ekf_linearize_poisson<T: Real>(field: &[T], probe: &[T], floor: T) -> Result<PoissonLinearization<T>> {
    if field.len() != probe.len() || !field.len().is_multiple_of(2) {
        return Err(Error::shape(format!(
            "field of length {} with probe of length {}",
            field.len(),
            probe.len()
        )));
    }
    if !(floor > T::zero()) {
        return Err(Error::Validation(format!("variance floor must be positive, got {floor}")));
    }
    let n = field.len() / 2;
    let mut observation = BlockDiagMat::zeros(n, 1, 2);
    let mut meas_cov = BlockDiagMat::zeros(n, 1, 1);
    let mut predicted = Vec::with_capacity(n);
    let two = T::c(2.0);
    for i in 0..n {
        let re = field[2 * i] + probe[2 * i];
        let im = field[2 * i + 1] + probe[2 * i + 1];
        let intensity = re * re + im * im;
        let h = observation.block_mut(i);
        h[0] = two * re;
        h[1] = two * im;
        meas_cov.block_mut(i)[0] = intensity.max(floor);
        predicted.push(intensity);
    }
    Ok(PoissonLinearization { observation, meas_cov, predicted })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backend {
    Full,
    Banded,
    BdFast,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::Full, Backend::BdFast, Backend::Banded];

    /// Short label used in result tables.
    pub fn tag(self) -> &'static str {
        match self {
            Backend::Full => "full",
            Backend::Banded => "banded",
            Backend::BdFast => "bd",
        }
    }
}

impl serde::Serialize for Backend {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.tag())
    }
}

/// Filter state for one EKF arm.
#[derive(Clone, Debug, PartialEq)]
pub enum EkfState<T: Real> {
    Full(DenseFilterState<T>),
    Banded(BdFilterState<T>),
    BdFast(BdFilterState<T>),
}

impl<T: Real> EkfState<T> {
    pub fn new(backend: Backend, x0: Vec<T>, p0: BlockDiagMat<T>) -> Result<Self> {
        let bd = BdFilterState::new(x0, p0)?;
        Ok(match backend {
            Backend::Full => Self::Full(bd.to_dense()),
            Backend::Banded => Self::Banded(bd),
            Backend::BdFast => Self::BdFast(bd),
        })
    }

    pub fn backend(&self) -> Backend {
        match self {
            Self::Full(_) => Backend::Full,
            Self::Banded(_) => Backend::Banded,
            Self::BdFast(_) => Backend::BdFast,
        }
    }

    pub fn x(&self) -> &[T] {
        match self {
            Self::Full(s) => &s.x,
            Self::Banded(s) | Self::BdFast(s) => &s.x,
        }
    }
}

/// One EKF step with Poisson photon counts. The measurement is linearized
/// at the prediction `F x̃` plus the probe field, and the innovation is
/// `y − |F x̃ + ΔE|²`.
pub fn ekf_poisson_step<'a, T: Real>(
    st: &EkfState<T>,
    model: impl Into<StepModel<'a, T>>,
    probe: &[T],
    counts: &[T],
    floor: T,
) -> Result<EkfState<T>> {
    let model = model.into();
    let pred = model.transition.mul_vec(st.x());
    let lin = ekf_linearize_poisson(&pred, probe, floor)?;
    if counts.len() != lin.predicted.len() {
        return Err(Error::shape(format!(
            "{} counts for {} pixels",
            counts.len(),
            lin.predicted.len()
        )));
    }
    let e: Vec<T> = counts.iter().zip(&lin.predicted).map(|(&y, &p)| y - p).collect();
    let m = model.with_measurement(&lin.observation, &lin.meas_cov);
    let obs = Observation::Innovation(&e);
    Ok(match st {
        EkfState::Full(s) => EkfState::Full(full_kf_step_blocked(s, m, obs)?),
        EkfState::Banded(s) => EkfState::Banded(banded_kf_step(s, m, obs)?),
        EkfState::BdFast(s) => EkfState::BdFast(bdkf_fast_step(s, m, obs)?.0),
    })
}
