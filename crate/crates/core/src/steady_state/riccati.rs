use crate::blockstruct::{bd_sandwich, BlockDiagMat, Cholesky, DenseMat};
use crate::filters::{covariance_update, StepModel};
use crate::model::CoupledSystem;
use crate::spectral::is_detectable;
use crate::steady_state::types::{Covariance, Gain, IterOptions, ResidualTail, SteadyStateResult};
use crate::{Error, Real, Result};

fn all_blocks_detectable<T: Real>(sys: &CoupledSystem<T>) -> Result<bool> {
    let mut last: Option<(DenseMat<T>, DenseMat<T>, bool)> = None;
    for i in 0..sys.n() {
        let f = sys.transition().block_mat(i);
        let h = sys.observation().block_mat(i);
        let ok = match &last {
            Some((lf, lh, ok)) if *lf == f && *lh == h => *ok,
            _ => is_detectable(&f, &h)?,
        };
        if !ok {
            return Ok(false);
        }
        last = Some((f, h, ok));
    }
    Ok(true)
}

/// `F P Fᵀ + Q` for block-diagonal `F`.
fn predict<T: Real>(f: &BlockDiagMat<T>, p_plus: &DenseMat<T>, q: &DenseMat<T>) -> DenseMat<T> {
    (&f.dense_mul_t(&f.mul_dense(p_plus)) + q).symmetrized()
}

/// Returns `P₊ = P₋ − (HP₋)ᵀ S⁻¹ (HP₋)`, the factor of `S` and `HP₋`.
fn update<T: Real>(
    h: &BlockDiagMat<T>,
    r: &BlockDiagMat<T>,
    p_minus: &DenseMat<T>,
) -> Result<(DenseMat<T>, Cholesky<T>, DenseMat<T>)> {
    let hp = h.mul_dense(p_minus);
    let s = (&h.dense_mul_t(&hp) + &r.to_dense()).symmetrized();
    let chol = s.cholesky().ok_or(Error::NotPositiveDefinite { what: "S", block: 0 })?;
    let w = chol.forward(&hp);
    let p_plus = (p_minus - &w.t_matmul(&w)).symmetrized();
    Ok((p_plus, chol, hp))
}

/// Steady state of the full Kalman filter for the stacked system with
/// process covariance `q`.
///
/// `p0` is the initial update-step covariance (default `0`, so the first
/// prediction is `q`). The returned `P₊` uses the Joseph form.
pub fn solve_dare<T: Real>(
    sys: &CoupledSystem<T>,
    q: &DenseMat<T>,
    opts: IterOptions,
    p0: Option<&DenseMat<T>>,
) -> Result<SteadyStateResult<T>> {
    opts.validate()?;
    let dim = sys.state_dim();
    if q.shape() != (dim, dim) || p0.is_some_and(|p| p.shape() != (dim, dim)) {
        return Err(Error::shape(format!("solve_dare: Q {:?} for state dimension {dim}", q.shape())));
    }
    let detectable = all_blocks_detectable(sys)?;
    let (f, h, r) = (sys.transition(), sys.observation(), sys.meas_cov());
    let mut p_minus = match p0 {
        Some(p) => predict(f, p, q),
        None => q.clone().symmetrized(),
    };
    let mut tail = ResidualTail::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let (p_plus, _, _) = update(h, r, &p_minus)?;
        let next = predict(f, &p_plus, q);
        residual = rel_change(&(&next - &p_minus).frobenius_norm(), &next.frobenius_norm());
        tail.push(residual);
        p_minus = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(tail.into_error("solve_dare", iterations));
    }
    let (_, chol, hp) = update(h, r, &p_minus)?;
    let gain = chol.solve(&hp).transpose();
    let i_kh = &DenseMat::identity(dim) - &h.transpose().dense_mul_t(&gain);
    let p_plus = (&i_kh.sandwich(&p_minus) + &gain.sandwich(&r.to_dense())).symmetrized();
    Ok(SteadyStateResult {
        p_minus: Covariance::Dense(p_minus),
        p_plus: Covariance::Dense(p_plus),
        gain: Gain::Dense(gain),
        iterations,
        residual,
        converged,
        detectable,
    })
}

fn rel_change<T: Real>(diff: &T, norm: &T) -> f64 {
    let (d, n) = (diff.as_f64(), norm.as_f64());
    if n > 0.0 {
        d / n
    } else {
        d
    }
}

/// One data-free step of the block-diagonal recursion: `P̃₊ ↦ P̃₊'`.
pub fn bd_riccati_map<T: Real>(sys: &CoupledSystem<T>, p_plus: &BlockDiagMat<T>) -> Result<BlockDiagMat<T>> {
    Ok(covariance_update(p_plus, StepModel::from(sys))?.0)
}

/// Steady state of the block-diagonal filter, with process covariance
/// `V + G U Gᵀ` taken from `sys` (pass a system with `U = 0` for `V` alone).
///
/// `p0` is the initial block-diagonal update-step covariance (default `0`).
/// `P̃₋` is returned in block-plus-low-rank form and the gain in factored
/// form, both evaluated at the final `P̃₊`.
pub fn solve_bd_dare<T: Real>(
    sys: &CoupledSystem<T>,
    opts: IterOptions,
    p0: Option<&BlockDiagMat<T>>,
) -> Result<SteadyStateResult<T>> {
    opts.validate()?;
    let detectable = all_blocks_detectable(sys)?;
    let model = StepModel::from(sys);
    let f = sys.transition();
    let mut p = match p0 {
        Some(p) => p.clone(),
        None => BlockDiagMat::zeros(sys.n(), sys.c(), sys.c()),
    };
    let mut tail = ResidualTail::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let (next, work) = covariance_update(&p, model)?;
        // the G U Gᵀ term cancels in the change of P̃₋
        let diff = bd_sandwich(f, &next.sub(&p)?)?.frobenius_norm().as_f64();
        let norm = Covariance::BlockLowRank {
            blocks: work.l.clone(),
            coupling: sys.coupling().clone(),
            input_cov: sys.input_cov().clone(),
        }
        .frobenius_norm();
        residual = if norm > 0.0 { diff / norm } else { diff };
        tail.push(residual);
        p = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(tail.into_error("solve_bd_dare", iterations));
    }
    let (_, work) = covariance_update(&p, model)?;
    Ok(SteadyStateResult {
        p_minus: Covariance::BlockLowRank {
            blocks: work.l.clone(),
            coupling: sys.coupling().clone(),
            input_cov: sys.input_cov().clone(),
        },
        p_plus: Covariance::Block(p),
        gain: Gain::Factored(Box::new(work)),
        iterations,
        residual,
        converged,
        detectable,
    })
}

struct BlockSteady<T: Real> {
    p_minus: DenseMat<T>,
    p_plus: DenseMat<T>,
    gain: DenseMat<T>,
    iterations: usize,
    residual: f64,
}

fn block_dare<T: Real>(
    f: &DenseMat<T>,
    h: &DenseMat<T>,
    q: &DenseMat<T>,
    r: &DenseMat<T>,
    opts: IterOptions,
    block: usize,
) -> Result<BlockSteady<T>> {
    let solve = |pm: &DenseMat<T>| -> Result<(DenseMat<T>, DenseMat<T>)> {
        let hp = h.matmul(pm);
        let s = (&hp.matmul_t(h) + r).symmetrized();
        let chol = s.cholesky().ok_or(Error::NotPositiveDefinite { what: "S", block })?;
        let sinv_hp = chol.solve(&hp);
        Ok(((pm - &hp.t_matmul(&sinv_hp)).symmetrized(), sinv_hp))
    };
    let mut pm = q.clone().symmetrized();
    let mut tail = ResidualTail::new();
    for it in 1..=opts.max_iter {
        let (pp, _) = solve(&pm)?;
        let next = (&f.sandwich(&pp) + q).symmetrized();
        let residual = rel_change(&(&next - &pm).frobenius_norm(), &next.frobenius_norm());
        tail.push(residual);
        pm = next;
        if !residual.is_finite() {
            return Err(tail.into_error("banded_steady", it));
        }
        if residual <= opts.tol {
            let (p_plus, sinv_hp) = solve(&pm)?;
            return Ok(BlockSteady { p_minus: pm, p_plus, gain: sinv_hp.transpose(), iterations: it, residual });
        }
    }
    Err(tail.into_error("banded_steady", opts.max_iter))
}

/// Steady state of the banded filter: an independent Riccati fixed point
/// per sub-system with process covariance `V⁽ⁱ⁾ + G⁽ⁱ⁾ U G⁽ⁱ⁾ᵀ`.
/// Consecutive identical sub-systems reuse the previous block's solution.
pub fn banded_steady<T: Real>(sys: &CoupledSystem<T>, opts: IterOptions) -> Result<SteadyStateResult<T>> {
    opts.validate()?;
    let detectable = all_blocks_detectable(sys)?;
    let (n, c, d) = (sys.n(), sys.c(), sys.d());
    let q = sys.banded_process_cov();
    let mut p_minus = BlockDiagMat::zeros(n, c, c);
    let mut p_plus = BlockDiagMat::zeros(n, c, c);
    let mut gain = BlockDiagMat::zeros(n, c, d);
    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    let mut prev: Option<([DenseMat<T>; 4], BlockSteady<T>)> = None;
    for i in 0..n {
        let key = [
            sys.transition().block_mat(i),
            sys.observation().block_mat(i),
            q.block_mat(i),
            sys.meas_cov().block_mat(i),
        ];
        let solved = match prev.take() {
            Some((k, s)) if k == key => s,
            _ => block_dare(&key[0], &key[1], &key[2], &key[3], opts, i)?,
        };
        p_minus.set_block(i, &solved.p_minus)?;
        p_plus.set_block(i, &solved.p_plus)?;
        gain.set_block(i, &solved.gain)?;
        iterations = iterations.max(solved.iterations);
        residual = residual.max(solved.residual);
        prev = Some((key, solved));
    }
    Ok(SteadyStateResult {
        p_minus: Covariance::Block(p_minus),
        p_plus: Covariance::Block(p_plus),
        gain: Gain::Block(gain),
        iterations,
        residual,
        converged: true,
        detectable,
    })
}
