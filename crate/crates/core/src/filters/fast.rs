use crate::blockstruct::{kernels, pairwise_sum, BlockDiagMat, DenseMat, SmallMat, TallBlockMat};
use crate::filters::step::{check_state_len, Dims, Observation, StepModel};
use crate::filters::BdFilterState;
use crate::{Error, Real, Result};

/// Everything a fast step computed, kept for the gain action and the
/// coupling-input posterior.
///
/// With `L = F P̃ Fᵀ + V` and `M = H L Hᵀ + R` (both block-diagonal) and
/// `N = Gᵀ Hᵀ M⁻¹ H G`:
/// `A = L − L Hᵀ M⁻¹ H L`, `B = L Hᵀ M⁻¹ H G`, `C₁ = (U⁻¹ + N)⁻¹`,
/// `C₂ = U (N C₁ N − N) U + U`, `C₃ = U N C₁ − U`.
#[derive(Clone, Debug)]
pub struct FastStepWork<T: Real> {
    pub l: BlockDiagMat<T>,
    pub m: BlockDiagMat<T>,
    pub n: SmallMat<T>,
    pub b: TallBlockMat<T>,
    pub c1: SmallMat<T>,
    pub c2: SmallMat<T>,
    pub c3: SmallMat<T>,
    pub a: BlockDiagMat<T>,
    /// `M⁻¹ H G`, `d×r` per block.
    minv_hg: TallBlockMat<T>,
    /// `M⁻¹ H L`, `d×c` per block.
    minv_hl: BlockDiagMat<T>,
    coupling: TallBlockMat<T>,
    dims: Dims,
}

/// Posterior of the coupling input given one innovation.
#[derive(Clone, Debug, PartialEq)]
pub struct InputPosterior<T: Real> {
    pub mu: Vec<T>,
    pub sigma: SmallMat<T>,
}

/// Block-diagonal filter step in `O(n r²)`.
///
/// Only the diagonal blocks of the low-rank terms are ever formed:
/// `P̃ᵢ = Aᵢ + Bᵢ C₁ Bᵢᵀ + Gᵢ C₂ Gᵢᵀ + Gᵢ C₃ Bᵢᵀ + Bᵢ C₃ᵀ Gᵢᵀ`.
/// `C₁` is obtained from `(I + U N) C₁ = U`, so a singular `U` is fine.
pub fn bdkf_fast_step<'a, T: Real>(
    st: &BdFilterState<T>,
    model: impl Into<StepModel<'a, T>>,
    obs: Observation<'_, T>,
) -> Result<(BdFilterState<T>, FastStepWork<T>)> {
    let model = model.into();
    let dims = model.dims()?;
    check_state_len(&st.x, dims)?;
    if st.p.n() != dims.n || st.p.block_shape() != (dims.c, dims.c) {
        return Err(Error::shape("covariance blocks do not match the model".to_string()));
    }
    let pred = model.transition.mul_vec(&st.x);
    let e = obs.innovation(&model, &pred)?;
    let work = factor(&st.p, &model, dims)?;
    let p = work.assemble();
    let ke = work.gain_action(&e);
    let x = pred.iter().zip(ke).map(|(&a, b)| a + b).collect();
    Ok((BdFilterState { x, p, k: st.k + 1 }, work))
}

/// Covariance part of [`bdkf_fast_step`] only, for data-free iterations.
pub(crate) fn covariance_update<T: Real>(
    prior: &BlockDiagMat<T>,
    model: StepModel<'_, T>,
) -> Result<(BlockDiagMat<T>, FastStepWork<T>)> {
    let dims = model.dims()?;
    if prior.n() != dims.n || prior.block_shape() != (dims.c, dims.c) {
        return Err(Error::shape("covariance blocks do not match the model".to_string()));
    }
    let work = factor(prior, &model, dims)?;
    Ok((work.assemble(), work))
}

fn factor<T: Real>(prior: &BlockDiagMat<T>, model: &StepModel<'_, T>, dims: Dims) -> Result<FastStepWork<T>> {
    let Dims { n, c, d, r } = dims;
    let mut l = BlockDiagMat::zeros(n, c, c);
    let mut m = BlockDiagMat::zeros(n, d, d);
    let mut a = BlockDiagMat::zeros(n, c, c);
    let mut b = TallBlockMat::zeros(n, c, r);
    let mut minv_hg = TallBlockMat::zeros(n, d, r);
    let mut minv_hl = BlockDiagMat::zeros(n, d, c);
    let mut n_parts = vec![T::zero(); n * r * r];

    let mut fp = vec![T::zero(); c * c];
    let mut hl = vec![T::zero(); d * c];
    let mut hg = vec![T::zero(); d * r];
    let mut chol = vec![T::zero(); d * d];
    for i in 0..n {
        let f = model.transition.block(i);
        let h = model.observation.block(i);

        let li = l.block_mut(i);
        kernels::mul_nn(f, prior.block(i), &mut fp, c, c, c);
        kernels::mul_nt(&fp, f, li, c, c, c);
        for (o, &v) in li.iter_mut().zip(model.process_cov.block(i)) {
            *o += v;
        }
        kernels::symmetrize(li, c);

        kernels::mul_nn(h, li, &mut hl, d, c, c);
        let mi = m.block_mut(i);
        kernels::mul_nt(&hl, h, mi, d, c, d);
        for (o, &v) in mi.iter_mut().zip(model.meas_cov.block(i)) {
            *o += v;
        }
        kernels::symmetrize(mi, d);
        chol.copy_from_slice(mi);
        if !kernels::cholesky_in_place(&mut chol, d) {
            return Err(Error::NotPositiveDefinite { what: "M", block: i });
        }

        kernels::mul_nn(h, model.coupling.block(i), &mut hg, d, c, r);
        let mhg = minv_hg.block_mut(i);
        mhg.copy_from_slice(&hg);
        kernels::cholesky_solve_in_place(&chol, d, mhg, r);
        kernels::mul_tn(&hg, mhg, &mut n_parts[i * r * r..(i + 1) * r * r], r, d, r);
        kernels::mul_tn(&hl, mhg, b.block_mut(i), c, d, r);

        let mhl = minv_hl.block_mut(i);
        mhl.copy_from_slice(&hl);
        kernels::cholesky_solve_in_place(&chol, d, mhl, c);
        let ai = a.block_mut(i);
        kernels::mul_tn(&hl, mhl, ai, c, d, c);
        for (o, &lv) in ai.iter_mut().zip(l.block(i)) {
            *o = lv - *o;
        }
        kernels::symmetrize(ai, c);
    }
    let mut nm = DenseMat::from_row_major(r, r, pairwise_sum(&mut n_parts, r * r).to_vec())?;
    if n == 0 {
        nm = DenseMat::zeros(r, r);
    }
    nm.symmetrize();

    let u = model.input_cov;
    let un = u.matmul(&nm);
    let i_un = &DenseMat::identity(r) + &un;
    let c1 = i_un
        .solve(u)
        .map_err(|_| Error::Singular("I + U N is singular".into()))?
        .symmetrized();
    let c2 = (&u.sandwich(&(&nm.matmul(&c1).matmul(&nm) - &nm)) + u).symmetrized();
    let c3 = &un.matmul(&c1) - u;
    Ok(FastStepWork {
        l,
        m,
        n: nm,
        b,
        c1,
        c2,
        c3,
        a,
        minv_hg,
        minv_hl,
        coupling: model.coupling.clone(),
        dims,
    })
}

impl<T: Real> FastStepWork<T> {
    fn assemble(&self) -> BlockDiagMat<T> {
        let Dims { n, c, r, .. } = self.dims;
        let mut p = self.a.clone();
        let mut bc1 = vec![T::zero(); c * r];
        let mut gc2 = vec![T::zero(); c * r];
        let mut gc3 = vec![T::zero(); c * r];
        let mut t1 = vec![T::zero(); c * c];
        let mut t2 = vec![T::zero(); c * c];
        let mut t3 = vec![T::zero(); c * c];
        for i in 0..n {
            let bi = self.b.block(i);
            let gi = self.coupling.block(i);
            kernels::mul_nn(bi, self.c1.as_slice(), &mut bc1, c, r, r);
            kernels::mul_nn(gi, self.c2.as_slice(), &mut gc2, c, r, r);
            kernels::mul_nn(gi, self.c3.as_slice(), &mut gc3, c, r, r);
            kernels::mul_nt(&bc1, bi, &mut t1, c, r, c);
            kernels::mul_nt(&gc2, gi, &mut t2, c, r, c);
            kernels::mul_nt(&gc3, bi, &mut t3, c, r, c);
            let pi = p.block_mut(i);
            for row in 0..c {
                for col in 0..c {
                    let k = row * c + col;
                    // G C₃ Bᵀ plus its transpose B C₃ᵀ Gᵀ
                    pi[k] += t1[k] + t2[k] + t3[k] + t3[col * c + row];
                }
            }
            kernels::symmetrize(pi, c);
        }
        p
    }

    /// `t = Gᵀ Hᵀ M⁻¹ z`, reduced in a fixed pairwise order.
    fn reduce_t(&self, z: &[T]) -> Vec<T> {
        let Dims { n, d, r, .. } = self.dims;
        assert_eq!(z.len(), n * d, "gain action on a vector of length {}", z.len());
        let mut parts = vec![T::zero(); n * r];
        for i in 0..n {
            kernels::mul_t_vec(self.minv_hg.block(i), &z[i * d..(i + 1) * d], &mut parts[i * r..(i + 1) * r], r, d);
        }
        if n == 0 {
            return vec![T::zero(); r];
        }
        pairwise_sum(&mut parts, r).to_vec()
    }

    /// `K̃ z = L Hᵀ M⁻¹ z − B C₁ t − G C₃ t` with `t = Gᵀ Hᵀ M⁻¹ z`, using
    /// only vector products.
    pub fn gain_action(&self, z: &[T]) -> Vec<T> {
        let Dims { n, c, d, r } = self.dims;
        let t = self.reduce_t(z);
        let c1t = self.c1.mul_vec(&t);
        let c3t = self.c3.mul_vec(&t);
        let mut out = vec![T::zero(); n * c];
        let mut tmp_b = vec![T::zero(); c];
        let mut tmp_g = vec![T::zero(); c];
        for i in 0..n {
            let oi = &mut out[i * c..(i + 1) * c];
            kernels::mul_t_vec(self.minv_hl.block(i), &z[i * d..(i + 1) * d], oi, c, d);
            kernels::mul_vec(self.b.block(i), &c1t, &mut tmp_b, c, r);
            kernels::mul_vec(self.coupling.block(i), &c3t, &mut tmp_g, c, r);
            for ((o, &pb), &pg) in oi.iter_mut().zip(&tmp_b).zip(&tmp_g) {
                *o -= pb + pg;
            }
        }
        out
    }

    /// The gain as a dense `nc × nd` matrix, one column per unit vector.
    /// Quadratic in `n`; meant for analysis and tests.
    pub fn dense_gain(&self) -> DenseMat<T> {
        let Dims { n, c, d, .. } = self.dims;
        let mut k = DenseMat::zeros(n * c, n * d);
        let mut z = vec![T::zero(); n * d];
        for j in 0..n * d {
            z[j] = T::one();
            for (row, v) in self.gain_action(&z).into_iter().enumerate() {
                k[(row, j)] = v;
            }
            z[j] = T::zero();
        }
        k
    }

    /// `μᵤ = −C₃ Gᵀ Hᵀ M⁻¹ e`, `Σᵤ = C₁`.
    pub fn coupling_posterior(&self, innovation: &[T]) -> Result<InputPosterior<T>> {
        let Dims { n, d, .. } = self.dims;
        if innovation.len() != n * d {
            return Err(Error::shape(format!(
                "innovation has length {}, expected {}",
                innovation.len(),
                n * d
            )));
        }
        let t = self.reduce_t(innovation);
        let mu = self.c3.mul_vec(&t).into_iter().map(|v| -v).collect();
        Ok(InputPosterior { mu, sigma: self.c1.clone() })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
}

/// Free-function form of [`FastStepWork::coupling_posterior`].
pub fn coupling_posterior<T: Real>(work: &FastStepWork<T>, innovation: &[T]) -> Result<InputPosterior<T>> {
    work.coupling_posterior(innovation)
}
