use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::blockstruct::{BlockDiagMat, DenseMat};
use crate::filters::{bdkf_fast_step, full_kf_step, BdFilterState, DenseFilterState, Observation};
use crate::model::rng::{standard_normal, RngSpec};
use crate::model::{make_random_system, CoupledSystem};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub ns_fast: Vec<usize>,
    pub ns_full: Vec<usize>,
    pub reps: usize,
    pub c: usize,
    pub d: usize,
    pub r: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ns_fast: (8..=13).map(|k| 1 << k).collect(),
            ns_full: vec![32, 64, 128, 256],
            reps: 7,
            c: 2,
            d: 1,
            r: 4,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 5 {
            return Err(Error::Validation(format!("reps must be at least 5, got {}", self.reps)));
        }
        if self.c == 0 || self.d == 0 || self.r == 0 {
            return Err(Error::Validation("c, d and r must be positive".into()));
        }
        if self.ns_fast.iter().chain(&self.ns_full).any(|&n| n == 0) {
            return Err(Error::Validation("sub-system counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    /// `"bd"` or `"full"`.
    pub filter: &'static str,
    pub n: usize,
    pub r: usize,
    pub median_step_time_s: f64,
    pub reps: usize,
}

/// Median wall time of `f` over `reps` calls after one warmup call.
pub fn median_time<O>(reps: usize, mut f: impl FnMut() -> O) -> f64 {
    black_box(f());
    let mut times: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            black_box(f());
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let m = times.len() / 2;
    if times.len() % 2 == 1 {
        times[m]
    } else {
        0.5 * (times[m - 1] + times[m])
    }
}

fn bench_system(cfg: &BenchConfig, n: usize, spec: &RngSpec) -> Result<(CoupledSystem<f64>, Vec<f64>, Vec<f64>)> {
    let sys = make_random_system(cfg.c, cfg.d, cfg.r, n, 0.95, &spec.derive(n as u64))?;
    let mut rng = spec.derive(!(n as u64)).rng()?;
    let x = (0..sys.state_dim()).map(|_| standard_normal(&mut rng)).collect();
    let y = (0..sys.meas_dim()).map(|_| standard_normal(&mut rng)).collect();
    Ok((sys, x, y))
}

/// Per-step timings of `bdkf_fast_step` and the Joseph-form `full_kf_step`.
/// Every repetition steps from the same prior. Runs serially so timed
/// sections never overlap.
pub fn scaling_benchmark(cfg: &BenchConfig, spec: &RngSpec) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.ns_fast.len() + cfg.ns_full.len());
    for &n in &cfg.ns_fast {
        let (sys, x, y) = bench_system(cfg, n, spec)?;
        let st = BdFilterState::new(x, BlockDiagMat::identity(n, cfg.c))?;
        bdkf_fast_step(&st, &sys, Observation::Measured(&y))?;
        let t = median_time(cfg.reps, || bdkf_fast_step(&st, &sys, Observation::Measured(&y)));
        rows.push(BenchRow { filter: "bd", n, r: cfg.r, median_step_time_s: t, reps: cfg.reps });
    }
    for &n in &cfg.ns_full {
        let (sys, x, y) = bench_system(cfg, n, spec)?;
        let ds = sys.dense_stack()?;
        let st = DenseFilterState::new(x, DenseMat::identity(sys.state_dim()))?;
        full_kf_step(&st, &ds, Observation::Measured(&y))?;
        let t = median_time(cfg.reps, || full_kf_step(&st, &ds, Observation::Measured(&y)));
        rows.push(BenchRow { filter: "full", n, r: cfg.r, median_step_time_s: t, reps: cfg.reps });
    }
    Ok(rows)
}

/// Least-squares slope of `ln t` against `ln n` over the rows of `filter`.
/// `None` with fewer than two distinct `n`.
pub fn loglog_slope(rows: &[BenchRow], filter: &str) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.filter == filter).map(|r| ((r.n as f64).ln(), r.median_step_time_s.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (pts.len() >= 2 && sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let rows: Vec<BenchRow> = [4usize, 8, 16, 32]
            .iter()
            .map(|&n| BenchRow { filter: "full", n, r: 1, median_step_time_s: 1e-6 * (n as f64).powi(3), reps: 5 })
            .collect();
        assert!((loglog_slope(&rows, "full").unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&rows, "bd"), None);
    }

    #[test]
    fn median_of_even_and_odd() {
        let mut k = 0.0;
        // warmup is not timed; just check the call count
        let t = median_time(5, || {
            k += 1.0;
            k
        });
        assert!(t >= 0.0);
        assert_eq!(k, 6.0);
    }

    #[test]
    fn empty_full_list_gives_only_fast_rows() {
        let cfg = BenchConfig { ns_fast: vec![4, 8], ns_full: vec![], reps: 5, ..Default::default() };
        let rows = scaling_benchmark(&cfg, &RngSpec::new(1)).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.filter == "bd" && r.median_step_time_s > 0.0 && r.reps == 5));
    }

    #[test]
    fn too_few_reps_rejected() {
        let cfg = BenchConfig { reps: 3, ..Default::default() };
        assert!(matches!(scaling_benchmark(&cfg, &RngSpec::new(1)), Err(Error::Validation(_))));
    }
}
