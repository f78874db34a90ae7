use crate::blockstruct::DenseMat;
use crate::filters::step::{check_state_len, Observation, StepModel};
use crate::filters::DenseFilterState;
use crate::model::DenseStack;
use crate::{Error, Real, Result};

/// One step of the Kalman filter on the stacked dense system, with
/// `Q = V + G U Gᵀ` and a Joseph-form covariance update.
pub fn full_kf_step<T: Real>(
    st: &DenseFilterState<T>,
    sys: &DenseStack<T>,
    obs: Observation<'_, T>,
) -> Result<DenseFilterState<T>> {
    let f = &sys.transition;
    let h = &sys.observation;
    let dim = f.rows();
    if st.x.len() != dim || st.p.shape() != (dim, dim) || h.cols() != dim {
        return Err(Error::shape(format!(
            "full step: state {} / P {:?} against F {:?}, H {:?}",
            st.x.len(),
            st.p.shape(),
            f.shape(),
            h.shape()
        )));
    }
    let pred = f.mul_vec(&st.x);
    let e = dense_innovation(obs, h, &pred)?;

    let p_minus = (&f.sandwich(&st.p) + &sys.total_process_cov).symmetrized();
    let hp = h.matmul(&p_minus);
    let s = (&hp.matmul_t(h) + &sys.meas_cov).symmetrized();
    let chol = s.cholesky().ok_or(Error::NotPositiveDefinite { what: "S", block: 0 })?;
    // K = P₋Hᵀ S⁻¹ = (S⁻¹ H P₋)ᵀ
    let gain = chol.solve(&hp).transpose();
    let i_kh = &DenseMat::identity(dim) - &gain.matmul(h);
    let p = (&i_kh.sandwich(&p_minus) + &gain.sandwich(&sys.meas_cov)).symmetrized();

    let ke = gain.mul_vec(&e);
    let x = pred.iter().zip(ke).map(|(&a, b)| a + b).collect();
    Ok(DenseFilterState { x, p, k: st.k + 1 })
}

/// Full-covariance Kalman step that exploits block-diagonal `F`, `H`, `V`,
/// `R`. The update is `P₊ = P₋ − WᵀW` with `W = chol(S)⁻¹ H P₋`, which costs
/// `O(N² m)` instead of the `O(N³)` of [`full_kf_step`].
pub fn full_kf_step_blocked<'a, T: Real>(
    st: &DenseFilterState<T>,
    model: impl Into<StepModel<'a, T>>,
    obs: Observation<'_, T>,
) -> Result<DenseFilterState<T>> {
    let model = model.into();
    let dims = model.dims()?;
    check_state_len(&st.x, dims)?;
    let dim = dims.n * dims.c;
    if st.p.shape() != (dim, dim) {
        return Err(Error::shape(format!("covariance {:?}, expected {dim}×{dim}", st.p.shape())));
    }
    let pred = model.transition.mul_vec(&st.x);
    let e = obs.innovation(&model, &pred)?;

    let f = model.transition;
    let mut p_minus = f.dense_mul_t(&f.mul_dense(&st.p));
    let g = model.coupling.to_dense();
    let gugt = g.matmul(model.input_cov).matmul_t(&g);
    let q = model.process_cov;
    for i in 0..dims.n {
        let vb = q.block(i);
        for a in 0..dims.c {
            for b in 0..dims.c {
                p_minus[(i * dims.c + a, i * dims.c + b)] += vb[a * dims.c + b];
            }
        }
    }
    p_minus = (&p_minus + &gugt).symmetrized();

    let h = model.observation;
    let hp = h.mul_dense(&p_minus);
    let mut s = h.dense_mul_t(&hp);
    let r = model.meas_cov;
    for i in 0..dims.n {
        let rb = r.block(i);
        for a in 0..dims.d {
            for b in 0..dims.d {
                s[(i * dims.d + a, i * dims.d + b)] += rb[a * dims.d + b];
            }
        }
    }
    s.symmetrize();
    let chol = s.cholesky().ok_or(Error::NotPositiveDefinite { what: "S", block: 0 })?;
    let w = chol.forward(&hp);
    let p = (&p_minus - &w.t_matmul(&w)).symmetrized();

    let ke = hp.t_mul_vec(&chol.solve_vec(&e));
    let x = pred.iter().zip(ke).map(|(&a, b)| a + b).collect();
    Ok(DenseFilterState { x, p, k: st.k + 1 })
}

pub(crate) fn dense_innovation<T: Real>(obs: Observation<'_, T>, h: &DenseMat<T>, pred: &[T]) -> Result<Vec<T>> {
    let v = match obs {
        Observation::Measured(y) | Observation::Innovation(y) => y,
    };
    if v.len() != h.rows() {
        return Err(Error::shape(format!("observation has length {}, expected {}", v.len(), h.rows())));
    }
    Ok(match obs {
        Observation::Measured(y) => {
            let hx = h.mul_vec(pred);
            y.iter().zip(hx).map(|(&a, b)| a - b).collect()
        }
        Observation::Innovation(e) => e.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_random_system, CoupledSystem, RngSpec, Subsystem};

    fn scalar(f: f64, h: f64, q: f64, r: f64) -> CoupledSystem<f64> {
        let m = |v: f64| DenseMat::from_rows(&[[v]]).unwrap();
        let sub = Subsystem {
            transition: m(f),
            observation: m(h),
            process_cov: m(q),
            meas_cov: m(r),
            coupling: m(0.0),
        };
        CoupledSystem::identical(&sub, 1, m(1.0)).unwrap()
    }

    fn prior(dim: usize) -> DenseFilterState<f64> {
        DenseFilterState::new(vec![1.0; dim], DenseMat::identity(dim)).unwrap()
    }

    #[test]
    fn zero_observation_gives_no_information() {
        let sys = make_random_system(2, 1, 2, 3, 0.9, &RngSpec::new(1)).unwrap();
        let h = crate::blockstruct::BlockDiagMat::zeros(3, 1, 2);
        let sys = sys.with_measurement(h, sys.meas_cov().clone()).unwrap();
        let ds = sys.dense_stack().unwrap();
        let st = prior(6);
        let out = full_kf_step(&st, &ds, Observation::Measured(&[5.0, 5.0, 5.0])).unwrap();
        let p_minus = (&ds.transition.sandwich(&st.p) + &ds.total_process_cov).symmetrized();
        assert!((&out.p - &p_minus).max_abs() < 1e-14);
        assert_eq!(out.x, ds.transition.mul_vec(&st.x));
    }

    #[test]
    fn huge_noise_gives_tiny_gain() {
        let sys = scalar(0.9, 1.0, 1.0, 1e12);
        let ds = sys.dense_stack().unwrap();
        let st = DenseFilterState::new(vec![0.0], DenseMat::identity(1)).unwrap();
        let out = full_kf_step(&st, &ds, Observation::Measured(&[1.0])).unwrap();
        // x₊ = K·1 since the prediction is 0
        assert!(out.x[0].abs() <= 1e-9);
    }

    #[test]
    fn scalar_riccati_limit() {
        let ds = scalar(0.9, 1.0, 1.0, 1.0).dense_stack().unwrap();
        let mut st = prior(1);
        for _ in 0..200 {
            st = full_kf_step(&st, &ds, Observation::Measured(&[0.0])).unwrap();
        }
        let mut pm = 1.0;
        for _ in 0..10_000 {
            pm = 0.81 * (pm - pm * pm / (pm + 1.0)) + 1.0;
        }
        let p_plus = pm - pm * pm / (pm + 1.0);
        assert!((st.p[(0, 0)] - p_plus).abs() < 1e-12);
    }

    #[test]
    fn blocked_matches_joseph() {
        let sys = make_random_system(3, 2, 2, 4, 0.95, &RngSpec::new(8)).unwrap();
        let ds = sys.dense_stack().unwrap();
        let mut a = prior(12);
        let mut b = a.clone();
        let y: Vec<f64> = (0..8).map(|k| (k as f64).sin()).collect();
        for _ in 0..10 {
            a = full_kf_step(&a, &ds, Observation::Measured(&y)).unwrap();
            b = full_kf_step_blocked(&b, &sys, Observation::Measured(&y)).unwrap();
        }
        assert!((&a.p - &b.p).frobenius_norm() <= 1e-10 * a.p.frobenius_norm());
        let dx: f64 = a.x.iter().zip(&b.x).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(dx <= 1e-10);
    }
}
