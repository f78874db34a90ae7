use crate::blockstruct::DenseMat;
use crate::model::CoupledSystem;
use crate::steady_state::types::{IterOptions, ResidualTail};
use crate::{Error, Real, Result};

const UNSTABLE_GROWTH: f64 = 1e100;

/// Steady error covariance of a filter that uses the fixed gain `gain`
/// (`nc × nd`): the fixed point of
/// `Σ ← (I − KH)(F Σ Fᵀ + Q)(I − KH)ᵀ + K R Kᵀ` with `Q = V + G U Gᵀ`.
///
/// The map is iterated by doubling: after `j` rounds the sum holds `2ʲ`
/// applications of the map started from zero. If the powers of
/// `Φ = (I − KH)F` do not decay the closed loop is unstable and the result
/// is [`Error::Domain`].
pub fn true_error_cov<T: Real>(sys: &CoupledSystem<T>, gain: &DenseMat<T>, opts: IterOptions) -> Result<DenseMat<T>> {
    opts.validate()?;
    let ds = sys.dense_stack()?;
    let dim = sys.state_dim();
    if gain.shape() != (dim, sys.meas_dim()) {
        return Err(Error::shape(format!(
            "gain {:?} for a {dim}-state, {}-measurement system",
            gain.shape(),
            sys.meas_dim()
        )));
    }
    let a = &DenseMat::identity(dim) - &gain.matmul(&ds.observation);
    let mut phi = a.matmul(&ds.transition);
    let mut x = (&a.sandwich(&ds.total_process_cov) + &gain.sandwich(&ds.meas_cov)).symmetrized();
    let mut tail = ResidualTail::new();
    let rounds = opts.max_iter.min(64);
    for round in 1..=rounds {
        let inc = phi.sandwich(&x);
        x = (&x + &inc).symmetrized();
        let norm = x.frobenius_norm().as_f64();
        let residual = if norm > 0.0 { inc.frobenius_norm().as_f64() / norm } else { 0.0 };
        tail.push(residual);
        if residual <= opts.tol {
            return Ok(x);
        }
        phi = phi.matmul(&phi);
        // ‖Φ^(2ʲ)‖ blowing up, or no decay at all after many squarings,
        // means ρ(Φ) ≥ 1
        let growth = phi.frobenius_norm().as_f64();
        if !residual.is_finite() || !growth.is_finite() || growth > UNSTABLE_GROWTH || (round >= 40 && growth >= 1.0) {
            return Err(Error::Domain(format!(
                "closed loop (I − KH)F is not stable: ‖Φ^(2^{round})‖_F = {growth:.3e}"
            )));
        }
    }
    Err(tail.into_error("true_error_cov", rounds))
}
