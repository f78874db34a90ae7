use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockstruct::{BlockDiagMat, DenseMat};
use crate::filters::{banded_kf_step, bdkf_fast_step, full_kf_step, Backend, BdFilterState, DenseFilterState, Observation};
use crate::model::rng::RngSpec;
use crate::model::{observe, propagate, CoupledSystem, NoiseSampler};
use crate::steady_state::{banded_steady, solve_bd_dare, solve_dare, Gain, IterOptions};
use crate::{Error, Result};

/// How the filter under test obtains its gain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainSource {
    /// Run the covariance recursion from `P = 0` alongside the estimate.
    Recursive,
    /// Use the fixed gain of the backend's steady state.
    Steady,
}

enum Runner {
    Fixed(Gain<f64>),
    Full(crate::model::DenseStack<f64>),
    Bd,
    Banded,
}

/// Sample covariance of `x̃_K − x_K` over `trials` independent runs of
/// `horizon` steps. Truth and estimate both start at `0`; trial `t` draws
/// from seed `t` of `rng`. Trials run in parallel on the current rayon pool.
pub fn monte_carlo_error(
    sys: &CoupledSystem<f64>,
    backend: Backend,
    source: GainSource,
    trials: usize,
    horizon: usize,
    rng: &RngSpec,
) -> Result<DenseMat<f64>> {
    if trials < 2 || horizon == 0 {
        return Err(Error::Validation(format!("need trials ≥ 2 and horizon ≥ 1 (got {trials}, {horizon})")));
    }
    let opts = IterOptions::default();
    let runner = match (source, backend) {
        (GainSource::Steady, Backend::Full) => Runner::Fixed(solve_dare(sys, &sys.total_process_cov()?, opts, None)?.gain),
        (GainSource::Steady, Backend::BdFast) => Runner::Fixed(solve_bd_dare(sys, opts, None)?.gain),
        (GainSource::Steady, Backend::Banded) => Runner::Fixed(banded_steady(sys, opts)?.gain),
        (GainSource::Recursive, Backend::Full) => Runner::Full(sys.dense_stack()?),
        (GainSource::Recursive, Backend::BdFast) => Runner::Bd,
        (GainSource::Recursive, Backend::Banded) => Runner::Banded,
    };
    let noise = NoiseSampler::new(sys)?;
    let dim = sys.state_dim();
    let errors: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(sys, &runner, &noise, horizon, &rng.derive(t)))
        .collect::<Result<_>>()?;
    let mean: Vec<f64> = (0..dim).map(|j| errors.iter().map(|e| e[j]).sum::<f64>() / trials as f64).collect();
    let mut cov = DenseMat::<f64>::zeros(dim, dim);
    for e in &errors {
        for i in 0..dim {
            for j in 0..=i {
                cov[(i, j)] += (e[i] - mean[i]) * (e[j] - mean[j]);
            }
        }
    }
    let denom = (trials - 1) as f64;
    Ok(DenseMat::from_fn(dim, dim, |i, j| if j <= i { cov[(i, j)] } else { cov[(j, i)] } / denom))
}

fn run_trial(sys: &CoupledSystem<f64>, runner: &Runner, noise: &NoiseSampler, horizon: usize, spec: &RngSpec) -> Result<Vec<f64>> {
    let mut rng = spec.rng()?;
    let dim = sys.state_dim();
    let mut x = vec![0.0; dim];
    let mut est = vec![0.0; dim];
    let mut bd = BdFilterState::new(vec![0.0; dim], BlockDiagMat::zeros(sys.n(), sys.c(), sys.c()))?;
    let mut full = DenseFilterState::new(vec![0.0; dim], DenseMat::zeros(dim, dim))?;
    for _ in 0..horizon {
        propagate(sys, noise, &mut x, &mut rng);
        let y = observe(sys, noise, &x, &mut rng);
        let obs = Observation::Measured(&y);
        match runner {
            Runner::Fixed(gain) => {
                let pred = sys.transition().mul_vec(&est);
                let hp = sys.observation().mul_vec(&pred);
                let e: Vec<f64> = y.iter().zip(&hp).map(|(a, b)| a - b).collect();
                est = pred.iter().zip(gain.apply(&e)).map(|(a, b)| a + b).collect();
            }
            Runner::Full(ds) => full = full_kf_step(&full, ds, obs)?,
            Runner::Bd => bd = bdkf_fast_step(&bd, sys, obs)?.0,
            Runner::Banded => bd = banded_kf_step(&bd, sys, obs)?,
        }
    }
    let fin = match runner {
        Runner::Fixed(_) => est,
        Runner::Full(_) => full.x,
        Runner::Bd | Runner::Banded => bd.x,
    };
    Ok(fin.iter().zip(&x).map(|(a, b)| a - b).collect())
}
