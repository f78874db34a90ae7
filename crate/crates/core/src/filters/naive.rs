use crate::blockstruct::{project_d, DenseMat};
use crate::filters::step::{check_state_len, Observation, StepModel};
use crate::filters::BdFilterState;
use crate::{Error, Real, Result};

/// Block-diagonal filter step evaluated densely: `P̃₋ = F P̃ Fᵀ + V + G U Gᵀ`,
/// `S̃ = H P̃₋ Hᵀ + R`, `K̃ = P̃₋ Hᵀ S̃⁻¹`, `P̃₊ = D{(I − K̃H) P̃₋}`.
///
/// Costs `O(n³)`; it exists as the reference for [`bdkf_fast_step`].
/// Returns the dense gain alongside the new state.
///
/// [`bdkf_fast_step`]: crate::filters::bdkf_fast_step
pub fn bdkf_naive_step<'a, T: Real>(
    st: &BdFilterState<T>,
    model: impl Into<StepModel<'a, T>>,
    obs: Observation<'_, T>,
) -> Result<(BdFilterState<T>, DenseMat<T>)> {
    let model = model.into();
    let dims = model.dims()?;
    check_state_len(&st.x, dims)?;
    if st.p.n() != dims.n || st.p.block_shape() != (dims.c, dims.c) {
        return Err(Error::shape("covariance blocks do not match the model".to_string()));
    }
    let pred = model.transition.mul_vec(&st.x);
    let e = obs.innovation(&model, &pred)?;

    let f = model.transition.to_dense();
    let h = model.observation.to_dense();
    let g = model.coupling.to_dense();
    let q = &model.process_cov.to_dense() + &g.sandwich(model.input_cov);
    let p_minus = (&f.sandwich(&st.p.to_dense()) + &q).symmetrized();
    let hp = h.matmul(&p_minus);
    let s = (&hp.matmul_t(&h) + &model.meas_cov.to_dense()).symmetrized();
    let chol = s.cholesky().ok_or(Error::NotPositiveDefinite { what: "S", block: 0 })?;
    let gain = chol.solve(&hp).transpose();
    let p_plus = &p_minus - &gain.matmul(&hp);
    let mut p = project_d(&p_plus, dims.c)?;
    p.symmetrize();

    let ke = gain.mul_vec(&e);
    let x = pred.iter().zip(ke).map(|(&a, b)| a + b).collect();
    Ok((BdFilterState { x, p, k: st.k + 1 }, gain))
}
