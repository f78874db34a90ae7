use crate::blockstruct::{kernels, DenseMat};
use crate::model::rng::{psd_factor, sample_gaussian, RngSpec};
use crate::model::system::CoupledSystem;
use crate::{Error, Real, Result};

/// Realization of the coupled system over `horizon` steps.
///
/// Row `k` holds the quantities of step `k + 1`: `states[k] = x_{k+1}`,
/// `measurements[k] = y_{k+1} = H x_{k+1} + w`, and `inputs[k]` is the
/// input that moved `x_k` to `x_{k+1}`. A filter started at `x₀` therefore
/// consumes `measurements[k]` at its step `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T: Real> {
    pub initial: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub inputs: Vec<Vec<T>>,
    pub measurements: Vec<Vec<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }
}

/// Pre-factored noise covariances for repeated sampling.
pub struct NoiseSampler {
    input: DenseMat<f64>,
    process: Vec<DenseMat<f64>>,
    meas: Vec<DenseMat<f64>>,
}

impl NoiseSampler {
    pub fn new<T: Real>(sys: &CoupledSystem<T>) -> Result<Self> {
        Ok(Self {
            input: psd_factor(sys.input_cov(), "U")?,
            process: (0..sys.n())
                .map(|i| psd_factor(&sys.process_cov().block_mat(i), &format!("V[{i}]")))
                .collect::<Result<_>>()?,
            meas: (0..sys.n())
                .map(|i| psd_factor(&sys.meas_cov().block_mat(i), &format!("R[{i}]")))
                .collect::<Result<_>>()?,
        })
    }
}

/// Advances `x` one step in place and returns the realized input `u`.
pub(crate) fn propagate<T: Real, R: rand::Rng + ?Sized>(
    sys: &CoupledSystem<T>,
    noise: &NoiseSampler,
    x: &mut [T],
    rng: &mut R,
) -> Vec<f64> {
    let (c, r) = (sys.c(), sys.r());
    let mut u = Vec::with_capacity(r);
    sample_gaussian(&noise.input, rng, &mut u);
    let u_t: Vec<T> = u.iter().map(|&v| T::c(v)).collect();
    let mut next = vec![T::zero(); c];
    let mut gu = vec![T::zero(); c];
    let mut v = Vec::with_capacity(c);
    for i in 0..sys.n() {
        let xi = &mut x[i * c..(i + 1) * c];
        kernels::mul_vec(sys.transition().block(i), xi, &mut next, c, c);
        kernels::mul_vec(sys.coupling().block(i), &u_t, &mut gu, c, r);
        v.clear();
        sample_gaussian(&noise.process[i], rng, &mut v);
        for k in 0..c {
            xi[k] = next[k] + T::c(v[k]) + gu[k];
        }
    }
    u
}

/// `y = H x + w`.
pub(crate) fn observe<T: Real, R: rand::Rng + ?Sized>(
    sys: &CoupledSystem<T>,
    noise: &NoiseSampler,
    x: &[T],
    rng: &mut R,
) -> Vec<T> {
    let (c, d) = (sys.c(), sys.d());
    let mut y = sys.observation().mul_vec(x);
    let mut w = Vec::with_capacity(d);
    for i in 0..sys.n() {
        w.clear();
        sample_gaussian(&noise.meas[i], rng, &mut w);
        for k in 0..d {
            y[i * d + k] += T::c(w[k]);
        }
    }
    debug_assert_eq!(x.len(), sys.n() * c);
    y
}

/// Simulates `horizon` steps from `x0`. Per step the draw order is: `u`,
/// then `v⁽ⁱ⁾` for each sub-system, then `w⁽ⁱ⁾` for each sub-system.
pub fn simulate<T: Real>(
    sys: &CoupledSystem<T>,
    horizon: usize,
    x0: &[T],
    rng: &RngSpec,
) -> Result<Trajectory<T>> {
    if x0.len() != sys.state_dim() {
        return Err(Error::Validation(format!("x0 has length {}, expected {}", x0.len(), sys.state_dim())));
    }
    if horizon == 0 {
        return Err(Error::Validation("horizon must be at least 1".into()));
    }
    let noise = NoiseSampler::new(sys)?;
    let mut g = rng.rng()?;
    let mut x = x0.to_vec();
    let mut traj = Trajectory {
        initial: x0.to_vec(),
        states: Vec::with_capacity(horizon),
        inputs: Vec::with_capacity(horizon),
        measurements: Vec::with_capacity(horizon),
    };
    for _ in 0..horizon {
        let u = propagate(sys, &noise, &mut x, &mut g);
        let y = observe(sys, &noise, &x, &mut g);
        traj.states.push(x.clone());
        traj.inputs.push(u.into_iter().map(T::c).collect());
        traj.measurements.push(y);
    }
    Ok(traj)
}
