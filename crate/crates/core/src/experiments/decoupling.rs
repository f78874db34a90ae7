use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockstruct::{block_fro_distance, MatRef};
use crate::model::make_identical_chain;
use crate::steady_state::{banded_steady, solve_bd_dare, solve_dare, true_error_cov, Covariance, IterOptions, SteadyStateResult};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecouplingConfig {
    pub betas: Vec<f64>,
    /// Ascending sub-system counts.
    pub ns: Vec<usize>,
    /// Largest `n` for which the dense Riccati solution is computed.
    pub full_kf_n_cap: usize,
    /// Largest `n` for which the true error covariance of the BD gain is
    /// computed. It is a dense Lyapunov solve, so keep this small.
    pub true_error_n_cap: usize,
    pub iter: IterOptions,
}

impl Default for DecouplingConfig {
    fn default() -> Self {
        Self {
            // the chain stops decoupling near β = 3.8, so the sweep straddles it
            betas: vec![0.1, 0.5, 1.0, 1.5, 2.0, 4.0, 8.0],
            ns: (1..=11).map(|k| 1 << k).collect(),
            full_kf_n_cap: 256,
            true_error_n_cap: 32,
            iter: IterOptions::default(),
        }
    }
}

impl DecouplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() || self.ns.is_empty() {
            return Err(Error::Validation("betas and ns must be non-empty".into()));
        }
        if self.betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::Validation("betas must be finite".into()));
        }
        if self.ns.contains(&0) || self.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("ns must be positive and strictly ascending".into()));
        }
        self.iter.validate()
    }
}

/// One `(β, n)` cell. Distances are Frobenius norms divided by `n`; a
/// distance that was not computed (above a cap, or a solver did not
/// converge) is NaN.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecouplingRow {
    pub beta: f64,
    pub n: usize,
    /// `‖P̃₊ − P₀‖_F / n`
    pub dist_p0: f64,
    /// `‖P̃₊ − P₊‖_F / n`
    pub dist_p: f64,
    /// `‖P₀ − P₊‖_F / n`
    pub dist_p0_full: f64,
    /// `‖Σ − P₀‖_F / n`, `Σ` the true error covariance under the BD gain.
    /// `None` above the cap or when the BD closed loop is unstable.
    pub dist_true_p0: Option<f64>,
    pub iterations_bd: usize,
    pub iterations_full: Option<usize>,
    pub converged: bool,
}

fn as_ref<T: crate::Real>(c: &Covariance<T>) -> MatRef<'_, T> {
    match c {
        Covariance::Dense(m) => MatRef::Dense(m),
        Covariance::Block(b) | Covariance::BlockLowRank { blocks: b, .. } => MatRef::Block(b),
    }
}

/// `Ok(None)` for non-convergence, so the cell can still be reported.
fn tolerate(r: Result<SteadyStateResult<f64>>) -> Result<Option<SteadyStateResult<f64>>> {
    match r {
        Ok(s) => Ok(Some(s)),
        Err(Error::NonConvergence { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Steady covariances of the identical chain: `P₀ = P₊(V)` (per block),
/// `P̃₊` from the block-diagonal recursion and `P₊` from the dense
/// recursion, both with `Q = V + G U Gᵀ`.
pub fn decoupling_cell(beta: f64, n: usize, cfg: &DecouplingConfig) -> Result<DecouplingRow> {
    let ctx = |e: Error| e.context(format!("decoupling cell β={beta}, n={n}"));
    let sys = make_identical_chain(beta, n).map_err(ctx)?;
    let uncoupled = sys.with_input_cov(crate::blockstruct::DenseMat::zeros(sys.r(), sys.r())).map_err(ctx)?;
    let p0 = tolerate(banded_steady(&uncoupled, cfg.iter)).map_err(ctx)?;
    let bd = tolerate(solve_bd_dare(&sys, cfg.iter, None)).map_err(ctx)?;
    let full = if n <= cfg.full_kf_n_cap {
        let q = sys.total_process_cov().map_err(ctx)?;
        Some(tolerate(solve_dare(&sys, &q, cfg.iter, None)).map_err(ctx)?)
    } else {
        None
    };
    let scale = 1.0 / n as f64;
    let dist = |a: Option<&SteadyStateResult<f64>>, b: Option<&SteadyStateResult<f64>>| -> Result<f64> {
        match (a, b) {
            (Some(a), Some(b)) => Ok(block_fro_distance(as_ref(&a.p_plus), as_ref(&b.p_plus))? * scale),
            _ => Ok(f64::NAN),
        }
    };
    let full_ref = full.as_ref().and_then(|f| f.as_ref());
    let dist_p0 = dist(bd.as_ref(), p0.as_ref()).map_err(ctx)?;
    let dist_p = dist(bd.as_ref(), full_ref).map_err(ctx)?;
    let dist_p0_full = dist(p0.as_ref(), full_ref).map_err(ctx)?;
    let dist_true_p0 = match (&bd, &p0) {
        (Some(bd), Some(p0)) if n <= cfg.true_error_n_cap => {
            // an unstable BD closed loop has no steady error covariance
            match true_error_cov(&sys, &bd.gain.to_dense(), cfg.iter) {
                Ok(sigma) => Some(block_fro_distance(&sigma, as_ref(&p0.p_plus)).map_err(ctx)? * scale),
                Err(Error::Domain(_) | Error::NonConvergence { .. }) => None,
                Err(e) => return Err(ctx(e)),
            }
        }
        _ => None,
    };
    let converged = p0.is_some() && bd.is_some() && full.as_ref().is_none_or(|f| f.is_some());
    Ok(DecouplingRow {
        beta,
        n,
        dist_p0,
        dist_p,
        dist_p0_full,
        dist_true_p0,
        iterations_bd: bd.as_ref().map_or(0, |b| b.iterations),
        iterations_full: full_ref.map(|f| f.iterations),
        converged,
    })
}

/// Sweeps `betas × ns` over identical chains. Rows come out β-major in
/// config order. Cells run in parallel on the current rayon pool.
pub fn decoupling_study(cfg: &DecouplingConfig) -> Result<Vec<DecouplingRow>> {
    cfg.validate()?;
    let cells: Vec<(f64, usize)> = cfg.betas.iter().flat_map(|&b| cfg.ns.iter().map(move |&n| (b, n))).collect();
    cells.par_iter().map(|&(b, n)| decoupling_cell(b, n, cfg)).collect()
}

/// Log-log slope of `dist_P` against `n` for one β, over the rows where
/// it is finite. About `−1` when the full filter decouples, about `0` when
/// `‖P̃ − P‖_F` grows like `n`.
pub fn dist_p_slope(rows: &[DecouplingRow], beta: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.beta == beta && r.dist_p.is_finite() && r.dist_p > 0.0)
        .map(|r| ((r.n as f64).ln(), r.dist_p.ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (pts.len() >= 2 && sxx > 0.0).then(|| sxy / sxx)
}

/// Smallest swept β whose `dist_P` slope exceeds `−0.5`, i.e. the first β
/// at which the full filter no longer decouples.
pub fn empirical_critical_beta(rows: &[DecouplingRow]) -> Option<f64> {
    let mut betas: Vec<f64> = rows.iter().map(|r| r.beta).collect();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    betas.into_iter().find(|&b| dist_p_slope(rows, b).is_some_and(|s| s > -0.5))
}
