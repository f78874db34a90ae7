use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockstruct::BlockDiagMat;
use crate::filters::{ekf_poisson_step, Backend, EkfState, StepModel};
use crate::model::rng::{sample_poisson, standard_normal, RngSpec};
use crate::model::{make_speckle_system, propagate, NoiseSampler};
use crate::{Error, Result};

/// Largest pixel count for which the full-covariance arm runs.
pub const FULL_EKF_PIXEL_CAP: usize = 1024;

/// Number of probe fields cycled round-robin.
pub const PROBE_COUNT: usize = 4;

const PROBE_SALT: u64 = 0x5052_4f42;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeckleConfig {
    pub n_pixels: usize,
    pub r_modes: usize,
    pub horizon: usize,
    /// Number of independent runs; run `s` uses seed `s` of the base spec.
    pub seeds: usize,
    /// Standard deviation of each drift-mode increment per step.
    pub drift_scale: f64,
    /// Mean speckle intensity in photons per step.
    pub photon_scale: f64,
    /// Probe intensity over mean speckle intensity.
    pub probe_ratio: f64,
    pub variance_floor: f64,
    /// Share of the horizon at the end that counts as steady state.
    pub steady_fraction: f64,
}

impl Default for SpeckleConfig {
    fn default() -> Self {
        Self {
            n_pixels: 256,
            r_modes: 6,
            horizon: 400,
            seeds: 10,
            drift_scale: 2.0,
            photon_scale: 10.0,
            probe_ratio: 10.0,
            variance_floor: crate::filters::DEFAULT_VARIANCE_FLOOR,
            steady_fraction: 0.5,
        }
    }
}

impl SpeckleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.into()));
        if self.n_pixels == 0 || self.r_modes == 0 || self.horizon == 0 || self.seeds == 0 {
            return bad("n_pixels, r_modes, horizon and seeds must be positive");
        }
        if !(self.drift_scale >= 0.0) || !(self.photon_scale > 0.0) || !(self.probe_ratio >= 0.0) {
            return bad("need drift_scale ≥ 0, photon_scale > 0, probe_ratio ≥ 0");
        }
        if !(self.variance_floor > 0.0) {
            return bad("variance_floor must be positive");
        }
        if !(self.steady_fraction > 0.0 && self.steady_fraction <= 1.0) {
            return bad("steady_fraction must lie in (0, 1]");
        }
        Ok(())
    }

    /// Filter arms in output order. The full arm is dropped above
    /// [`FULL_EKF_PIXEL_CAP`] pixels.
    pub fn arms(&self) -> Vec<Backend> {
        Backend::ALL.into_iter().filter(|&b| b != Backend::Full || self.n_pixels <= FULL_EKF_PIXEL_CAP).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeckleRow {
    pub seed: u64,
    /// 1-based step index.
    pub step: usize,
    pub filter: Backend,
    /// `‖x̃ − x‖² / n_pixels`
    pub mse: f64,
    pub step_time_s: f64,
}

/// `PROBE_COUNT` probe fields in `[Re, Im]` layout. Probe `j` at pixel `p`
/// is `a·exp(i(φₚ + jπ/2))` with random `φₚ`, so consecutive probes
/// illuminate both quadratures.
pub fn speckle_probes(cfg: &SpeckleConfig, base: &RngSpec) -> Result<Vec<Vec<f64>>> {
    let mut rng = base.derive(PROBE_SALT).rng()?;
    let amp = (cfg.probe_ratio * cfg.photon_scale).sqrt();
    let phases: Vec<f64> = (0..cfg.n_pixels).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
    Ok((0..PROBE_COUNT)
        .map(|j| {
            let shift = j as f64 * std::f64::consts::FRAC_PI_2;
            phases.iter().flat_map(|&ph| [amp * (ph + shift).cos(), amp * (ph + shift).sin()]).collect()
        })
        .collect())
}

/// Truth and photon counts of one seed.
struct Realization {
    x0_est: Vec<f64>,
    states: Vec<Vec<f64>>,
    counts: Vec<Vec<f64>>,
}

fn realize(cfg: &SpeckleConfig, sys: &crate::model::CoupledSystem<f64>, probes: &[Vec<f64>], spec: &RngSpec) -> Result<Realization> {
    let noise = NoiseSampler::new(sys)?;
    let mut rng = spec.rng()?;
    let sd = (0.5 * cfg.photon_scale).sqrt();
    let mut x: Vec<f64> = (0..2 * cfg.n_pixels).map(|_| sd * standard_normal(&mut rng)).collect();
    let mut states = Vec::with_capacity(cfg.horizon);
    let mut counts = Vec::with_capacity(cfg.horizon);
    for k in 0..cfg.horizon {
        propagate(sys, &noise, &mut x, &mut rng);
        let probe = &probes[k % PROBE_COUNT];
        let y = (0..cfg.n_pixels)
            .map(|p| {
                let re = x[2 * p] + probe[2 * p];
                let im = x[2 * p + 1] + probe[2 * p + 1];
                sample_poisson(re * re + im * im, &mut rng) as f64
            })
            .collect();
        states.push(x.clone());
        counts.push(y);
    }
    Ok(Realization { x0_est: vec![0.0; 2 * cfg.n_pixels], states, counts })
}

/// Runs every arm over one seed's photon stream. Rows are step-major, arms
/// in [`SpeckleConfig::arms`] order.
pub fn speckle_seed(cfg: &SpeckleConfig, base: &RngSpec, seed: u64) -> Result<Vec<SpeckleRow>> {
    cfg.validate()?;
    let sp = make_speckle_system(cfg.n_pixels, cfg.r_modes, cfg.drift_scale)?;
    let sys = &sp.system;
    let probes = speckle_probes(cfg, base)?;
    let real = realize(cfg, sys, &probes, &base.derive(seed))?;
    let model = StepModel::from(sys);
    let p0 = BlockDiagMat::identity(cfg.n_pixels, 2).scale(0.5 * cfg.photon_scale);
    let arms = cfg.arms();
    let mut per_arm = Vec::with_capacity(arms.len());
    for &arm in &arms {
        let mut st = EkfState::new(arm, real.x0_est.clone(), p0.clone())?;
        let mut out = Vec::with_capacity(cfg.horizon);
        for k in 0..cfg.horizon {
            let t = Instant::now();
            st = ekf_poisson_step(&st, model, &probes[k % PROBE_COUNT], &real.counts[k], cfg.variance_floor)
                .map_err(|e| e.context(format!("{} EKF, seed {seed}, step {}", arm.tag(), k + 1)))?;
            let dt = t.elapsed().as_secs_f64();
            let se: f64 = st.x().iter().zip(&real.states[k]).map(|(a, b)| (a - b) * (a - b)).sum();
            out.push((se / cfg.n_pixels as f64, dt));
        }
        per_arm.push(out);
    }
    let mut rows = Vec::with_capacity(cfg.horizon * arms.len());
    for k in 0..cfg.horizon {
        for (a, &arm) in arms.iter().enumerate() {
            let (mse, step_time_s) = per_arm[a][k];
            rows.push(SpeckleRow { seed, step: k + 1, filter: arm, mse, step_time_s });
        }
    }
    Ok(rows)
}

/// All seeds, seed-major. Seeds run in parallel on the current rayon pool;
/// every arm of a seed sees the same photon counts.
pub fn speckle_study(cfg: &SpeckleConfig, base: &RngSpec) -> Result<Vec<SpeckleRow>> {
    cfg.validate()?;
    let per_seed: Vec<Vec<SpeckleRow>> =
        (0..cfg.seeds as u64).into_par_iter().map(|s| speckle_seed(cfg, base, s)).collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Seed-averaged steady-state figures of one arm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeckleSummary {
    pub filter: Backend,
    /// Mean of `mse` over the steady window and all seeds.
    pub steady_mse: f64,
    /// Mean per-step time over all rows.
    pub mean_step_time_s: f64,
}

/// Averages rows per arm; the steady window is the last
/// `steady_fraction` of the horizon.
pub fn summarize_speckle(rows: &[SpeckleRow], steady_fraction: f64) -> Vec<SpeckleSummary> {
    let horizon = rows.iter().map(|r| r.step).max().unwrap_or(0);
    let first = horizon - ((horizon as f64 * steady_fraction).ceil() as usize).min(horizon) + 1;
    Backend::ALL
        .into_iter()
        .filter_map(|arm| {
            let mine: Vec<&SpeckleRow> = rows.iter().filter(|r| r.filter == arm).collect();
            if mine.is_empty() {
                return None;
            }
            let steady: Vec<f64> = mine.iter().filter(|r| r.step >= first).map(|r| r.mse).collect();
            Some(SpeckleSummary {
                filter: arm,
                steady_mse: steady.iter().sum::<f64>() / steady.len() as f64,
                mean_step_time_s: mine.iter().map(|r| r.step_time_s).sum::<f64>() / mine.len() as f64,
            })
        })
        .collect()
}
