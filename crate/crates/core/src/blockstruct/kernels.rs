//! Row-major slice kernels shared by the dense and per-block code paths.
//!
//! All routines overwrite `out`; callers own the buffers so the per-block
//! loops can reuse scratch space across blocks.

use crate::Real;

/// `out (m×n) = a (m×k) · b (k×n)`
pub fn mul_nn<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(T::zero());
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out (m×n) = a (m×k) · bᵀ` where `b` is `n×k`.
pub fn mul_nt<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = dot(arow, brow);
        }
    }
}

/// `out (m×n) = aᵀ · b` where `a` is `k×m` and `b` is `k×n`.
pub fn mul_tn<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(T::zero());
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &api) in arow.iter().enumerate() {
            if api == T::zero() {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += api * bv;
            }
        }
    }
}

/// `out (m) = a (m×k) · x (k)`
pub fn mul_vec<T: Real>(a: &[T], x: &[T], out: &mut [T], m: usize, k: usize) {
    for i in 0..m {
        out[i] = dot(&a[i * k..(i + 1) * k], x);
    }
}

/// `out (m) = aᵀ · x` where `a` is `k×m`.
pub fn mul_t_vec<T: Real>(a: &[T], x: &[T], out: &mut [T], m: usize, k: usize) {
    out[..m].fill(T::zero());
    for p in 0..k {
        let xp = x[p];
        for (o, &av) in out[..m].iter_mut().zip(&a[p * m..(p + 1) * m]) {
            *o += av * xp;
        }
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Replaces the `n×n` square matrix with `(A + Aᵀ)/2`.
pub fn symmetrize<T: Real>(a: &mut [T], n: usize) {
    let half = T::c(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (a[i * n + j] + a[j * n + i]) * half;
            a[i * n + j] = s;
            a[j * n + i] = s;
        }
    }
}

/// In-place lower Cholesky factor of a symmetric `n×n` matrix. Only the lower
/// triangle is read; the strict upper triangle is zeroed. Returns `false`
/// when a pivot is not strictly positive (no pivoting, no jitter).
pub fn cholesky_in_place<T: Real>(a: &mut [T], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for p in 0..j {
            d -= a[j * n + p] * a[j * n + p];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return false;
        }
        let djj = d.sqrt();
        a[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for p in 0..j {
                s -= a[i * n + p] * a[j * n + p];
            }
            a[i * n + j] = s / djj;
        }
        for i in 0..j {
            a[i * n + j] = T::zero();
        }
    }
    true
}

/// Solves `L Lᵀ X = B` in place, `B` being `n×nrhs` row-major.
pub fn cholesky_solve_in_place<T: Real>(l: &[T], n: usize, b: &mut [T], nrhs: usize) {
    // forward: L Y = B
    for i in 0..n {
        for p in 0..i {
            let lip = l[i * n + p];
            if lip == T::zero() {
                continue;
            }
            for c in 0..nrhs {
                let v = b[p * nrhs + c];
                b[i * nrhs + c] -= lip * v;
            }
        }
        let lii = l[i * n + i];
        for c in 0..nrhs {
            b[i * nrhs + c] /= lii;
        }
    }
    // backward: Lᵀ X = Y
    for i in (0..n).rev() {
        for p in (i + 1)..n {
            let lpi = l[p * n + i];
            if lpi == T::zero() {
                continue;
            }
            for c in 0..nrhs {
                let v = b[p * nrhs + c];
                b[i * nrhs + c] -= lpi * v;
            }
        }
        let lii = l[i * n + i];
        for c in 0..nrhs {
            b[i * nrhs + c] /= lii;
        }
    }
}

/// LU factorization with partial pivoting, in place. Returns the row
/// permutation, or `None` for an exactly singular pivot column.
pub fn lu_in_place<T: Real>(a: &mut [T], n: usize) -> Option<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, a[i * n + k].abs()))
            .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax == T::zero() || !pmax.is_finite() {
            return None;
        }
        if piv != k {
            for j in 0..n {
                a.swap(k * n + j, piv * n + j);
            }
            perm.swap(k, piv);
        }
        let akk = a[k * n + k];
        for i in (k + 1)..n {
            let f = a[i * n + k] / akk;
            a[i * n + k] = f;
            if f == T::zero() {
                continue;
            }
            for j in (k + 1)..n {
                let v = a[k * n + j];
                a[i * n + j] -= f * v;
            }
        }
    }
    Some(perm)
}

/// Solves `A X = B` given the packed LU factors from [`lu_in_place`].
pub fn lu_solve<T: Real>(lu: &[T], perm: &[usize], n: usize, b: &[T], nrhs: usize) -> Vec<T> {
    let mut x = vec![T::zero(); n * nrhs];
    for (i, &p) in perm.iter().enumerate() {
        x[i * nrhs..(i + 1) * nrhs].copy_from_slice(&b[p * nrhs..(p + 1) * nrhs]);
    }
    for i in 0..n {
        for p in 0..i {
            let f = lu[i * n + p];
            if f == T::zero() {
                continue;
            }
            for c in 0..nrhs {
                let v = x[p * nrhs + c];
                x[i * nrhs + c] -= f * v;
            }
        }
    }
    for i in (0..n).rev() {
        for p in (i + 1)..n {
            let f = lu[i * n + p];
            if f == T::zero() {
                continue;
            }
            for c in 0..nrhs {
                let v = x[p * nrhs + c];
                x[i * nrhs + c] -= f * v;
            }
        }
        let d = lu[i * n + i];
        for c in 0..nrhs {
            x[i * nrhs + c] /= d;
        }
    }
    x
}
