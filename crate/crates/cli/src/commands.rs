use std::path::PathBuf;
use std::time::Instant;

use bdkf::blockstruct::DenseMat;
use bdkf::experiments::{
    decoupling_study, fmt_f64, scaling_benchmark, speckle_study, write_bench_csv, write_decoupling_csv,
    write_speckle_csv,
};
use bdkf::model::{simulate, RngSpec};
use bdkf::steady_state::{prop2_analysis, AlphaConstants, CouplingSummary, Prop2Report};
use serde::Serialize;

use crate::config::{bench_config, decouple_config, speckle_config, SimulateConfig, SteadyConfig};
use crate::error::CliError;
use crate::output::OutDir;

/// One resolved invocation.
pub struct Job {
    pub seed: u64,
    pub out: OutDir,
}

fn lib_io(name: &str) -> impl FnOnce(bdkf::Error) -> CliError + '_ {
    move |e| CliError::Io { path: PathBuf::from(name), source: std::io::Error::other(e.to_string()) }
}

pub fn simulate_cmd(job: &Job, cfg: &SimulateConfig) -> Result<PathBuf, CliError> {
    let sys = cfg.system.build().map_err(|e| CliError::Config(format!("system: {e}")))?;
    let x0 = cfg.x0.clone().unwrap_or_else(|| vec![0.0; sys.state_dim()]);
    let traj = simulate(&sys, cfg.horizon, &x0, &RngSpec::new(job.seed)).map_err(CliError::run("simulate"))?;
    let (nx, ny, nu) = (sys.state_dim(), sys.n() * sys.d(), sys.r());
    let path = job.out.write_with("trajectory.csv", |w| {
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let io = |e: csv::Error| CliError::Io { path: "trajectory.csv".into(), source: e.into() };
        let header = std::iter::once("step".to_string())
            .chain((0..nx).map(|i| format!("x_{i}")))
            .chain((0..ny).map(|i| format!("y_{i}")))
            .chain((0..nu).map(|i| format!("u_{i}")));
        csv.write_record(header).map_err(io)?;
        for (k, ((x, y), u)) in traj.states.iter().zip(&traj.measurements).zip(&traj.inputs).enumerate() {
            let row = std::iter::once((k + 1).to_string()).chain(x.iter().chain(y).chain(u).map(|&v| fmt_f64(v)));
            csv.write_record(row).map_err(io)?;
        }
        csv.flush().map_err(|e| CliError::Io { path: "trajectory.csv".into(), source: e })
    })?;
    job.out.write_sidecar("trajectory", "simulate", job.seed, cfg)?;
    Ok(path)
}

pub fn decouple_cmd(job: &Job, cfg_value: serde_json::Value, o: &crate::config::Overrides) -> Result<PathBuf, CliError> {
    let cfg = decouple_config(cfg_value, o)?;
    eprintln!("decouple: {} β × {} n cells", cfg.betas.len(), cfg.ns.len());
    let t = Instant::now();
    let rows = decoupling_study(&cfg).map_err(CliError::run("decoupling_study"))?;
    let bad = rows.iter().filter(|r| !r.converged).count();
    eprintln!("decouple: done in {:.1?}, {bad} cell(s) did not converge", t.elapsed());
    let path = job.out.write_with("decoupling.csv", |w| write_decoupling_csv(w, &rows).map_err(lib_io("decoupling.csv")))?;
    job.out.write_sidecar("decoupling", "decouple", job.seed, &cfg)?;
    Ok(path)
}

pub fn speckle_cmd(job: &Job, cfg_value: serde_json::Value, o: &crate::config::Overrides) -> Result<PathBuf, CliError> {
    let cfg = speckle_config(cfg_value, o)?;
    eprintln!("speckle: {} pixels, {} seeds × {} steps", cfg.n_pixels, cfg.seeds, cfg.horizon);
    let t = Instant::now();
    let rows = speckle_study(&cfg, &RngSpec::new(job.seed)).map_err(CliError::run("speckle_study"))?;
    eprintln!("speckle: done in {:.1?}", t.elapsed());
    let path = job.out.write_with("speckle.csv", |w| write_speckle_csv(w, &rows).map_err(lib_io("speckle.csv")))?;
    job.out.write_sidecar("speckle", "speckle", job.seed, &cfg)?;
    Ok(path)
}

pub fn bench_cmd(job: &Job, cfg_value: serde_json::Value, o: &crate::config::Overrides) -> Result<PathBuf, CliError> {
    let cfg = bench_config(cfg_value, o)?;
    eprintln!("bench: {} fast sizes, {} full sizes, {} reps", cfg.ns_fast.len(), cfg.ns_full.len(), cfg.reps);
    let rows = scaling_benchmark(&cfg, &RngSpec::new(job.seed)).map_err(CliError::run("scaling_benchmark"))?;
    let path = job.out.write_with("bench.csv", |w| write_bench_csv(w, &rows).map_err(lib_io("bench.csv")))?;
    job.out.write_sidecar("bench", "bench", job.seed, &cfg)?;
    Ok(path)
}

#[derive(Serialize)]
struct Converged {
    uncoupled: bool,
    banded: bool,
    bd: bool,
    full: Option<bool>,
}

#[derive(Serialize)]
struct SteadyOut<'a> {
    /// Predict-step covariance with `Q = V` (no coupling).
    #[serde(rename = "P_minus")]
    p_minus: DenseMat<f64>,
    #[serde(rename = "P_tilde_minus")]
    p_tilde_minus: DenseMat<f64>,
    /// Full filter with `Q = V + GUGᵀ`.
    #[serde(rename = "P_minus_full")]
    p_minus_full: Option<DenseMat<f64>>,
    #[serde(rename = "P_plus")]
    p_plus: DenseMat<f64>,
    #[serde(rename = "P_tilde_plus")]
    p_tilde_plus: DenseMat<f64>,
    converged: Converged,
    alphas: &'a [AlphaConstants],
    coupling: &'a CouplingSummary,
    prop2: &'a Prop2Report,
}

pub fn steady_cmd(job: &Job, cfg: &SteadyConfig) -> Result<PathBuf, CliError> {
    let sys = cfg.system.build().map_err(|e| CliError::Config(format!("system: {e}")))?;
    let an = prop2_analysis(&sys, cfg.iter, cfg.with_full).map_err(CliError::run("prop2_analysis"))?;
    let out = SteadyOut {
        p_minus: an.uncoupled.p_minus.to_dense(),
        p_tilde_minus: an.bd.p_minus.to_dense(),
        p_minus_full: an.full.as_ref().map(|f| f.p_minus.to_dense()),
        p_plus: an.uncoupled.p_plus.to_dense(),
        p_tilde_plus: an.bd.p_plus.to_dense(),
        converged: Converged {
            uncoupled: an.uncoupled.converged,
            banded: an.banded.converged,
            bd: an.bd.converged,
            full: an.full.as_ref().map(|f| f.converged),
        },
        alphas: &an.alphas,
        coupling: &an.coupling,
        prop2: &an.report,
    };
    let path = job.out.write_json("steady.json", &out)?;
    job.out.write_sidecar("steady", "steady", job.seed, cfg)?;
    Ok(path)
}
