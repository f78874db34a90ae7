use crate::blockstruct::{kernels, BlockDiagMat};
use crate::filters::step::{check_state_len, Observation, StepModel};
use crate::filters::BdFilterState;
use crate::{Error, Real, Result};

/// Kalman step with the projection applied at the predict step:
/// `P₋ = D{F P̃ Fᵀ + V + G U Gᵀ}`. Every sub-system then updates on its own.
pub fn banded_kf_step<'a, T: Real>(
    st: &BdFilterState<T>,
    model: impl Into<StepModel<'a, T>>,
    obs: Observation<'_, T>,
) -> Result<BdFilterState<T>> {
    let model = model.into();
    let dims = model.dims()?;
    check_state_len(&st.x, dims)?;
    if st.p.n() != dims.n || st.p.block_shape() != (dims.c, dims.c) {
        return Err(Error::shape("covariance blocks do not match the model".to_string()));
    }
    let (n, c, d, r) = (dims.n, dims.c, dims.d, dims.r);
    let pred = model.transition.mul_vec(&st.x);
    let e = obs.innovation(&model, &pred)?;

    let u = model.input_cov.as_slice();
    let mut p = BlockDiagMat::zeros(n, c, c);
    let mut x = pred;
    let mut fp = vec![T::zero(); c * c];
    let mut gu = vec![T::zero(); c * r];
    let mut p_minus = vec![T::zero(); c * c];
    let mut hp = vec![T::zero(); d * c];
    let mut s = vec![T::zero(); d * d];
    let mut sinv_hp = vec![T::zero(); d * c];
    let mut se = vec![T::zero(); d];
    let mut upd = vec![T::zero(); c];
    for i in 0..n {
        let f = model.transition.block(i);
        let h = model.observation.block(i);
        let g = model.coupling.block(i);
        kernels::mul_nn(f, st.p.block(i), &mut fp, c, c, c);
        kernels::mul_nt(&fp, f, &mut p_minus, c, c, c);
        kernels::mul_nn(g, u, &mut gu, c, r, r);
        kernels::mul_nt(&gu, g, &mut fp, c, r, c);
        for ((pm, &gg), &v) in p_minus.iter_mut().zip(&fp).zip(model.process_cov.block(i)) {
            *pm += gg + v;
        }
        kernels::symmetrize(&mut p_minus, c);

        kernels::mul_nn(h, &p_minus, &mut hp, d, c, c);
        kernels::mul_nt(&hp, h, &mut s, d, c, d);
        for (sv, &rv) in s.iter_mut().zip(model.meas_cov.block(i)) {
            *sv += rv;
        }
        kernels::symmetrize(&mut s, d);
        if !kernels::cholesky_in_place(&mut s, d) {
            return Err(Error::NotPositiveDefinite { what: "S", block: i });
        }
        sinv_hp.copy_from_slice(&hp);
        kernels::cholesky_solve_in_place(&s, d, &mut sinv_hp, c);
        // P₊ = P₋ − (HP₋)ᵀ S⁻¹ (HP₋)
        let pb = p.block_mut(i);
        kernels::mul_tn(&hp, &sinv_hp, pb, c, d, c);
        for (o, &pm) in pb.iter_mut().zip(&p_minus) {
            *o = pm - *o;
        }
        kernels::symmetrize(pb, c);

        se.copy_from_slice(&e[i * d..(i + 1) * d]);
        kernels::cholesky_solve_in_place(&s, d, &mut se, 1);
        kernels::mul_t_vec(&hp, &se, &mut upd, c, d);
        for (xv, &dv) in x[i * c..(i + 1) * c].iter_mut().zip(&upd) {
            *xv += dv;
        }
    }
    Ok(BdFilterState { x, p, k: st.k + 1 })
}
