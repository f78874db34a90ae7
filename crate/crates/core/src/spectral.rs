//! Eigenvalue and singular-value analysis, carried out in `f64` with
//! `nalgebra` regardless of the scalar type of the caller.

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix};

use crate::blockstruct::DenseMat;
use crate::{Error, Real, Result};

/// Analysis routines refuse state dimensions above this.
pub const ANALYSIS_DIM_LIMIT: usize = 10_000;

pub(crate) fn to_na<T: Real>(m: &DenseMat<T>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(m.rows(), m.cols(), m.as_slice().iter().map(|x| x.as_f64()))
}

fn guard(what: &'static str, dim: usize) -> Result<()> {
    if dim > ANALYSIS_DIM_LIMIT {
        return Err(Error::SizeGuard { what, dim, limit: ANALYSIS_DIM_LIMIT });
    }
    Ok(())
}

/// QR sweeps allowed per unit of dimension before giving up.
const SCHUR_SWEEPS_PER_DIM: usize = 200;

pub fn eigenvalues<T: Real>(m: &DenseMat<T>) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::shape(format!("eigenvalues of {:?}", m.shape())));
    }
    guard("eigenvalues", m.rows())?;
    let max_iter = SCHUR_SWEEPS_PER_DIM * m.rows().max(1);
    // the unbounded variant can cycle forever on highly repeated spectra
    let schur = Schur::try_new(to_na(m), f64::EPSILON, max_iter).ok_or_else(|| Error::NonConvergence {
        what: "Schur decomposition",
        iterations: max_iter,
        residual: f64::NAN,
        history: Vec::new(),
    })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// `max |λ|`.
pub fn spectral_radius<T: Real>(m: &DenseMat<T>) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

fn singular_values(m: DMatrix<f64>) -> Vec<f64> {
    m.singular_values().iter().copied().collect()
}

/// Induced 2-norm (largest singular value).
pub fn norm2<T: Real>(m: &DenseMat<T>) -> f64 {
    singular_values(to_na(m)).into_iter().fold(0.0, f64::max)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn sym_min_eigenvalue<T: Real>(m: &DenseMat<T>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::shape(format!("symmetric eigenvalues of {:?}", m.shape())));
    }
    guard("symmetric eigenvalues", m.rows())?;
    let a = to_na(m);
    let s = (&a + a.transpose()) * 0.5;
    Ok(s.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min))
}

/// Numerical rank with singular-value threshold `rel · σ_max`.
pub fn rank<T: Real>(m: &DenseMat<T>, rel: f64) -> usize {
    let sv = singular_values(to_na(m));
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel * smax).count()
}

/// Rank of the observability matrix `[H; HF; …; HF^{c−1}]`.
pub fn observability_rank<T: Real>(f: &DenseMat<T>, h: &DenseMat<T>) -> usize {
    let c = f.rows();
    let mut blocks = Vec::with_capacity(c);
    let mut hf = h.clone();
    for _ in 0..c {
        blocks.push(hf.clone());
        hf = hf.matmul(f);
    }
    let stacked = DenseMat::from_fn(c * h.rows(), c, |i, j| blocks[i / h.rows()][(i % h.rows(), j)]);
    rank(&stacked, 1e-8)
}

/// PBH test: every eigenvalue with `|λ| ≥ 1` must be observable through `h`.
pub fn is_detectable<T: Real>(f: &DenseMat<T>, h: &DenseMat<T>) -> Result<bool> {
    let c = f.rows();
    if observability_rank(f, h) == c {
        return Ok(true);
    }
    let fa = to_na(f).map(|x| Complex::new(x, 0.0));
    let ha = to_na(h).map(|x| Complex::new(x, 0.0));
    for lam in eigenvalues(f)? {
        if lam.norm() < 1.0 {
            continue;
        }
        let mut pbh = DMatrix::<Complex<f64>>::zeros(c + h.rows(), c);
        for i in 0..c {
            for j in 0..c {
                let id = if i == j { lam } else { Complex::new(0.0, 0.0) };
                pbh[(i, j)] = id - fa[(i, j)];
            }
        }
        for i in 0..h.rows() {
            for j in 0..c {
                pbh[(c + i, j)] = ha[(i, j)];
            }
        }
        let sv: Vec<f64> = pbh.singular_values().iter().copied().collect();
        let smax = sv.iter().copied().fold(0.0, f64::max);
        if sv.iter().filter(|&&s| s > 1e-8 * smax).count() < c {
            return Ok(false);
        }
    }
    Ok(true)
}

/// 2-norm condition number of a unit-column eigenvector matrix of `m`
/// (the Bauer–Fike constant).
///
/// Repeated eigenvalues are handled by taking an orthonormal null-space
/// basis of `m − λI` for each cluster; a cluster whose null space is smaller
/// than its multiplicity means `m` is defective and yields [`Error::Domain`].
pub fn eigenvector_condition<T: Real>(m: &DenseMat<T>) -> Result<f64> {
    let c = m.rows();
    let lams = eigenvalues(m)?;
    let a = to_na(m);
    let scale = a.iter().fold(1.0f64, |s, x| s.max(x.abs()));
    let cluster_tol = 1e-6 * scale;
    let null_tol = 1e-7 * scale;

    let mut used = vec![false; lams.len()];
    let mut columns: Vec<nalgebra::DVector<Complex<f64>>> = Vec::with_capacity(c);
    for i in 0..lams.len() {
        if used[i] {
            continue;
        }
        let members: Vec<usize> =
            (i..lams.len()).filter(|&j| !used[j] && (lams[j] - lams[i]).norm() <= cluster_tol).collect();
        for &j in &members {
            used[j] = true;
        }
        let mult = members.len();
        let lam = members.iter().map(|&j| lams[j]).sum::<Complex<f64>>() / mult as f64;
        let shifted = DMatrix::<Complex<f64>>::from_fn(c, c, |r, s| {
            let id = if r == s { lam } else { Complex::new(0.0, 0.0) };
            Complex::new(a[(r, s)], 0.0) - id
        });
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&p, &q| svd.singular_values[p].total_cmp(&svd.singular_values[q]));
        for &k in order.iter().take(mult) {
            if svd.singular_values[k] > null_tol {
                return Err(Error::Domain(format!(
                    "matrix is defective at eigenvalue {lam:.6}: eigenvector condition number undefined"
                )));
            }
            columns.push(v_t.row(k).adjoint().into_owned());
        }
    }
    let v = DMatrix::from_columns(&columns);
    let sv: Vec<f64> = v.singular_values().iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = smax / smin;
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::Domain(format!(
            "eigenvector matrix is numerically singular (condition {cond:.3e}); matrix is defective"
        )));
    }
    Ok(cond)
}
