use serde::Serialize;

use crate::blockstruct::{BlockDiagMat, DenseMat};
use crate::filters::{covariance_update, StepModel};
use crate::model::{CoupledSystem, Subsystem};
use crate::spectral::{eigenvector_condition, norm2, spectral_radius, ANALYSIS_DIM_LIMIT};
use crate::steady_state::riccati::{banded_steady, solve_bd_dare, solve_dare};
use crate::steady_state::types::{Covariance, IterOptions, SteadyStateResult};
use crate::{Error, Real, Result};

/// Coupling strength at the banded steady state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingSummary {
    /// `C = (U⁻¹ + Gᵀ Hᵀ M⁻¹ H G)⁻¹` with `M = H(F P̀₊ Fᵀ + V)Hᵀ + R`.
    pub c: DenseMat<f64>,
    /// `ε⁽ⁱ⁾ = ‖G⁽ⁱ⁾ C G⁽ⁱ⁾ᵀ‖_F`
    pub eps: Vec<f64>,
    /// `η = ‖G U Gᵀ‖_F`
    pub eta: f64,
}

/// `C`, `ε` and `η` from a banded update-step covariance `P̀₊`.
/// `C` is formed as `(I + U N)⁻¹ U`, so `U` may be singular.
pub fn compute_c<T: Real>(sys: &CoupledSystem<T>, p_grave_plus: &BlockDiagMat<T>) -> Result<CouplingSummary> {
    let (_, work) = covariance_update(p_grave_plus, StepModel::from(sys))?;
    let c = work.c1.cast::<f64>();
    let eps = (0..sys.n())
        .map(|i| sys.coupling().block_mat(i).cast::<f64>().sandwich(&c).frobenius_norm())
        .collect();
    let eta = Covariance::BlockLowRank {
        blocks: BlockDiagMat::zeros(sys.n(), sys.c(), sys.c()),
        coupling: sys.coupling().clone(),
        input_cov: sys.input_cov().clone(),
    }
    .frobenius_norm();
    Ok(CouplingSummary { c, eps, eta })
}

/// Per-sub-system constants of the perturbation bounds, all computed from
/// the uncoupled steady state (`Q = V⁽ⁱ⁾`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AlphaConstants {
    /// `1 / (1 − ρ(F_c)²)`
    pub a1: f64,
    /// `‖F_c‖₂`
    pub a2: f64,
    /// `‖(I + P₋ Hᵀ R⁻¹ H)⁻¹‖₂`
    pub a3: f64,
    /// `‖Hᵀ S⁻¹ H F‖₂`
    pub a4: f64,
    /// `‖Hᵀ S⁻¹ H‖₂`
    pub a5: f64,
    /// 2-norm condition number of the eigenvector matrix of `F_c`.
    pub bauer_fike: f64,
    /// `ρ(F_c)`
    pub spectral_radius: f64,
}

/// Constants for one sub-system given its uncoupled steady predict-step
/// covariance `P₋⁽ⁱ⁾(V)`.
pub fn alpha_constants<T: Real>(sub: &Subsystem<T>, p_minus_v: &DenseMat<T>) -> Result<AlphaConstants> {
    let f = sub.transition.cast::<f64>();
    let h = sub.observation.cast::<f64>();
    let r = sub.meas_cov.cast::<f64>();
    let p = p_minus_v.cast::<f64>();
    let c = f.rows();
    if p.shape() != (c, c) {
        return Err(Error::shape(format!("P₋ {:?} for a {c}-state sub-system", p.shape())));
    }
    let s = (&h.sandwich(&p) + &r).symmetrized();
    let sinv_h = s.solve(&h)?;
    let ht_sinv_h = h.t_matmul(&sinv_h);
    let gain = p.matmul(&sinv_h.transpose());
    let fc = &f - &gain.matmul(&h).matmul(&f);
    let rho = spectral_radius(&fc)?;
    if rho >= 1.0 {
        return Err(Error::Domain(format!("closed loop F_c is not stable (spectral radius {rho:.6})")));
    }
    let r_inv_h = r
        .solve(&h)
        .map_err(|_| Error::Domain("R is singular, so the third constant is undefined".into()))?;
    let inner = &DenseMat::identity(c) + &p.matmul(&h.t_matmul(&r_inv_h));
    Ok(AlphaConstants {
        a1: 1.0 / (1.0 - rho * rho),
        a2: norm2(&fc),
        a3: norm2(&inner.inverse()?),
        a4: norm2(&ht_sinv_h.matmul(&f)),
        a5: norm2(&ht_sinv_h),
        bauer_fike: eigenvector_condition(&fc)?,
        spectral_radius: rho,
    })
}

/// Both parts of the perturbation result, with the measured quantities
/// next to their bounds. A bound is `+∞` when its condition fails.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prop2Report {
    pub eps: Vec<f64>,
    pub eta: f64,
    pub part1_condition_ok: Vec<bool>,
    pub part1_bound: Vec<f64>,
    /// `‖block i of P̃₊(V + GUGᵀ) − P₊(V)‖_F`
    pub part1_measured: Vec<f64>,
    pub part2_condition_ok: bool,
    pub part2_bound_p: f64,
    /// `2 α₁ η`
    pub part2_bound_p_loose: f64,
    pub part2_bound_fc: f64,
    /// `‖P₋(V + GUGᵀ) − P₋(V)‖_F`, when the full solution was supplied.
    pub part2_measured_p_full: Option<f64>,
    /// `‖P̃₋(V + GUGᵀ) − P₋(V)‖_F`
    pub part2_measured_p_bd: f64,
    pub part2_measured_fc_full: Option<f64>,
    pub part2_measured_fc_bd: Option<f64>,
    /// Norm used for the Bauer–Fike constant.
    pub bauer_fike_norm: String,
}

impl Prop2Report {
    /// Every measured quantity is within its bound wherever the condition
    /// holds.
    pub fn bounds_hold(&self) -> bool {
        let part1 = self
            .part1_condition_ok
            .iter()
            .zip(&self.part1_bound)
            .zip(&self.part1_measured)
            .all(|((&ok, &b), &m)| !ok || m <= b);
        let within = |m: Option<f64>, b: f64| m.is_none_or(|m| m <= b);
        let part2 = !self.part2_condition_ok
            || (self.part2_measured_p_bd <= self.part2_bound_p
                && within(self.part2_measured_p_full, self.part2_bound_p)
                && within(self.part2_measured_fc_full, self.part2_bound_fc)
                && within(self.part2_measured_fc_bd, self.part2_bound_fc));
        part1 && part2
    }
}

/// Evaluates both bounds and the quantities they bound.
///
/// `uncoupled` is a steady state with `Q = V` (e.g. [`banded_steady`] on
/// the system with `U = 0`), `bd` the block-diagonal steady state with
/// `Q = V + GUGᵀ`, and `full` optionally the full Kalman steady state with
/// the same `Q`.
///
/// [`banded_steady`]: crate::steady_state::banded_steady
pub fn prop2_bounds(
    sys: &CoupledSystem<f64>,
    alphas: &[AlphaConstants],
    coupling: &CouplingSummary,
    uncoupled: &SteadyStateResult<f64>,
    bd: &SteadyStateResult<f64>,
    full: Option<&SteadyStateResult<f64>>,
) -> Result<Prop2Report> {
    let n = sys.n();
    let c = sys.c();
    if alphas.len() != n || coupling.eps.len() != n {
        return Err(Error::shape(format!(
            "{} alpha sets and {} ε values for {n} sub-systems",
            alphas.len(),
            coupling.eps.len()
        )));
    }
    let mut part1_condition_ok = Vec::with_capacity(n);
    let mut part1_bound = Vec::with_capacity(n);
    let mut part1_measured = Vec::with_capacity(n);
    for (i, (al, &eps)) in alphas.iter().zip(&coupling.eps).enumerate() {
        let a34e = al.a3 * al.a4 * eps;
        let q = al.a1 * (2.0 * al.a2 + a34e) * a34e;
        let ok = q < 1.0 && al.spectral_radius + al.bauer_fike * a34e < 1.0;
        part1_condition_ok.push(ok);
        part1_bound.push(if ok { al.a1 * al.a2 * al.a2 * eps / (1.0 - q) } else { f64::INFINITY });
        let diff = &bd.p_plus.diag_block(i, c) - &uncoupled.p_plus.diag_block(i, c);
        part1_measured.push(diff.frobenius_norm());
    }

    let max = |f: fn(&AlphaConstants) -> f64| alphas.iter().map(f).fold(0.0, f64::max);
    let (a1, a2, a3, a4, a5) = (max(|a| a.a1), max(|a| a.a2), max(|a| a.a3), max(|a| a.a4), max(|a| a.a5));
    let eta = coupling.eta;
    let (a, b) = (a1 * eta, a1 * a2 * a2 * a5);
    let part2_condition_ok = 4.0 * a * b < 1.0;
    // (1 − √(1 − 4ab)) / 2b, written to stay accurate for small ab
    let part2_bound_p = if part2_condition_ok { 2.0 * a / (1.0 + (1.0 - 4.0 * a * b).sqrt()) } else { f64::INFINITY };
    let part2_bound_fc = a3 * a4 * part2_bound_p;

    let part2_measured_p_bd = match (&bd.p_minus, &uncoupled.p_minus) {
        (Covariance::BlockLowRank { blocks, coupling, input_cov }, Covariance::Block(base)) => {
            Covariance::BlockLowRank { blocks: blocks.sub(base)?, coupling: coupling.clone(), input_cov: input_cov.clone() }
                .frobenius_norm()
        }
        (p, base) => (&p.to_dense() - &base.to_dense()).frobenius_norm(),
    };
    let part2_measured_p_full = full.map(|f| (&f.p_minus.to_dense() - &uncoupled.p_minus.to_dense()).frobenius_norm());
    let dense_ok = sys.state_dim() <= ANALYSIS_DIM_LIMIT;
    let fc_v = dense_ok.then(|| uncoupled.closed_loop(sys));
    let part2_measured_fc_bd = fc_v.as_ref().map(|fv| (&bd.closed_loop(sys) - fv).frobenius_norm());
    let part2_measured_fc_full = match (full, &fc_v) {
        (Some(f), Some(fv)) => Some((&f.closed_loop(sys) - fv).frobenius_norm()),
        _ => None,
    };

    Ok(Prop2Report {
        eps: coupling.eps.clone(),
        eta,
        part1_condition_ok,
        part1_bound,
        part1_measured,
        part2_condition_ok,
        part2_bound_p,
        part2_bound_p_loose: 2.0 * a1 * eta,
        part2_bound_fc,
        part2_measured_p_full,
        part2_measured_p_bd,
        part2_measured_fc_full,
        part2_measured_fc_bd,
        bauer_fike_norm: "2".into(),
    })
}

/// Every steady state the perturbation bounds refer to, plus the report.
#[derive(Clone, Debug)]
pub struct Prop2Analysis {
    /// `Q = V`
    pub uncoupled: SteadyStateResult<f64>,
    /// Banded filter with `Q = V + GUGᵀ`.
    pub banded: SteadyStateResult<f64>,
    /// Block-diagonal filter with `Q = V + GUGᵀ`.
    pub bd: SteadyStateResult<f64>,
    /// Full filter with `Q = V + GUGᵀ`, when requested.
    pub full: Option<SteadyStateResult<f64>>,
    pub alphas: Vec<AlphaConstants>,
    pub coupling: CouplingSummary,
    pub report: Prop2Report,
}

/// Solves for all steady states and evaluates [`prop2_bounds`].
pub fn prop2_analysis(sys: &CoupledSystem<f64>, opts: IterOptions, with_full: bool) -> Result<Prop2Analysis> {
    let v_only = sys.with_input_cov(DenseMat::zeros(sys.r(), sys.r()))?;
    let uncoupled = banded_steady(&v_only, opts)?;
    let banded = banded_steady(sys, opts)?;
    let Covariance::Block(p_grave) = &banded.p_plus else {
        return Err(Error::shape("banded steady state is not block-diagonal"));
    };
    let coupling = compute_c(sys, p_grave)?;
    let alphas = (0..sys.n())
        .map(|i| alpha_constants(&sys.subsystem(i), &uncoupled.p_minus.diag_block(i, sys.c())))
        .collect::<Result<Vec<_>>>()?;
    let bd = solve_bd_dare(sys, opts, None)?;
    let full = if with_full { Some(solve_dare(sys, &sys.total_process_cov()?, opts, None)?) } else { None };
    let report = prop2_bounds(sys, &alphas, &coupling, &uncoupled, &bd, full.as_ref())?;
    Ok(Prop2Analysis { uncoupled, banded, bd, full, alphas, coupling, report })
}
