use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::de::Deserializer;
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use super::kernels;
use crate::{Error, Real, Result};

/// Dense row-major matrix.
///
/// Arithmetic through the operator traits and the `matmul*` methods panics on
/// shape mismatch, like `nalgebra`; the fallible constructors and the block
/// operations in [`super::ops`] report [`Error::Shape`] instead.
#[derive(Clone, PartialEq)]
pub struct DenseMat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Small dense matrix (`r×r` coupling quantities and per-block matrices).
pub type SmallMat<T> = DenseMat<T>;

impl<T: Real> DenseMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_diag(d: &[T]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!("empty matrix {rows}×{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} entries for a {rows}×{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nr * nc);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != nc {
                return Err(Error::shape(format!("row {i} has {} entries, expected {nc}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(nr, nc, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn column(v: &[T]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul: {:?} · {:?}", self.shape(), rhs.shape());
        let mut out = Self::zeros(self.rows, rhs.cols);
        kernels::mul_nn(&self.data, &rhs.data, &mut out.data, self.rows, self.cols, rhs.cols);
        out
    }

    /// `self · rhsᵀ`
    pub fn matmul_t(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.cols, "matmul_t: {:?} · {:?}ᵀ", self.shape(), rhs.shape());
        let mut out = Self::zeros(self.rows, rhs.rows);
        kernels::mul_nt(&self.data, &rhs.data, &mut out.data, self.rows, self.cols, rhs.rows);
        out
    }

    /// `selfᵀ · rhs`
    pub fn t_matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows, "t_matmul: {:?}ᵀ · {:?}", self.shape(), rhs.shape());
        let mut out = Self::zeros(self.cols, rhs.cols);
        kernels::mul_tn(&self.data, &rhs.data, &mut out.data, self.cols, self.rows, rhs.cols);
        out
    }

    /// `self · m · selfᵀ`
    pub fn sandwich(&self, m: &Self) -> Self {
        self.matmul(m).matmul_t(self)
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec: {:?} · {}", self.shape(), v.len());
        let mut out = vec![T::zero(); self.rows];
        kernels::mul_vec(&self.data, v, &mut out, self.rows, self.cols);
        out
    }

    pub fn t_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "t_mul_vec: {:?}ᵀ · {}", self.shape(), v.len());
        let mut out = vec![T::zero(); self.cols];
        kernels::mul_t_vec(&self.data, v, &mut out, self.cols, self.rows);
        out
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        kernels::symmetrize(&mut self.data, self.rows);
    }

    pub fn symmetrized(mut self) -> Self {
        self.symmetrize();
        self
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest asymmetry `|a_ij − a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_submatrix(&mut self, r0: usize, c0: usize, m: &Self) {
        for i in 0..m.rows {
            for j in 0..m.cols {
                self[(r0 + i, c0 + j)] = m[(i, j)];
            }
        }
    }

    pub fn cholesky(&self) -> Option<Cholesky<T>> {
        if !self.is_square() {
            return None;
        }
        let mut l = self.data.clone();
        kernels::cholesky_in_place(&mut l, self.rows)
            .then_some(Cholesky { l: Self { rows: self.rows, cols: self.cols, data: l } })
    }

    /// Solves `self · X = rhs` by partial-pivoting LU.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        if !self.is_square() || self.rows != rhs.rows {
            return Err(Error::shape(format!("solve {:?} \\ {:?}", self.shape(), rhs.shape())));
        }
        let mut lu = self.data.clone();
        let perm = kernels::lu_in_place(&mut lu, self.rows)
            .ok_or_else(|| Error::Singular(format!("{}×{} LU pivot", self.rows, self.cols)))?;
        let x = kernels::lu_solve(&lu, &perm, self.rows, &rhs.data, rhs.cols);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(format!("{}×{} LU solve", self.rows, self.cols)));
        }
        Ok(Self { rows: self.rows, cols: rhs.cols, data: x })
    }

    pub fn inverse(&self) -> Result<Self> {
        self.solve(&Self::identity(self.rows))
    }

    pub fn cast<U: Real>(&self) -> DenseMat<U> {
        DenseMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::c(x.as_f64())).collect(),
        }
    }

    pub fn to_nested_f64(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).iter().map(|x| x.as_f64()).collect()).collect()
    }
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone)]
pub struct Cholesky<T> {
    l: DenseMat<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn l(&self) -> &DenseMat<T> {
        &self.l
    }

    pub fn solve(&self, rhs: &DenseMat<T>) -> DenseMat<T> {
        assert_eq!(self.l.rows, rhs.rows);
        let mut x = rhs.clone();
        kernels::cholesky_solve_in_place(&self.l.data, self.l.rows, &mut x.data, rhs.cols);
        x
    }

    pub fn solve_vec(&self, rhs: &[T]) -> Vec<T> {
        let mut x = rhs.to_vec();
        kernels::cholesky_solve_in_place(&self.l.data, self.l.rows, &mut x, 1);
        x
    }

    /// `L⁻¹ · rhs` (forward substitution only).
    pub fn forward(&self, rhs: &DenseMat<T>) -> DenseMat<T> {
        let n = self.l.rows;
        let mut x = rhs.clone();
        let nrhs = rhs.cols;
        for i in 0..n {
            for p in 0..i {
                let lip = self.l.data[i * n + p];
                if lip == T::zero() {
                    continue;
                }
                let (head, tail) = x.data.split_at_mut(i * nrhs);
                let src = &head[p * nrhs..(p + 1) * nrhs];
                for (d, &s) in tail[..nrhs].iter_mut().zip(src) {
                    *d -= lip * s;
                }
            }
            let lii = self.l.data[i * n + i];
            for v in &mut x.data[i * nrhs..(i + 1) * nrhs] {
                *v /= lii;
            }
        }
        x
    }
}

impl<T> Index<(usize, usize)> for DenseMat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

macro_rules! elementwise {
    ($tr:ident, $f:ident, $op:tt) => {
        impl<T: Real> $tr<&DenseMat<T>> for &DenseMat<T> {
            type Output = DenseMat<T>;
            fn $f(self, rhs: &DenseMat<T>) -> DenseMat<T> {
                assert_eq!(self.shape(), rhs.shape(), "elementwise {}", stringify!($op));
                DenseMat {
                    rows: self.rows,
                    cols: self.cols,
                    data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a $op b).collect(),
                }
            }
        }
        impl<T: Real> $tr<DenseMat<T>> for DenseMat<T> {
            type Output = DenseMat<T>;
            fn $f(self, rhs: DenseMat<T>) -> DenseMat<T> {
                (&self).$f(&rhs)
            }
        }
        impl<T: Real> $tr<&DenseMat<T>> for DenseMat<T> {
            type Output = DenseMat<T>;
            fn $f(self, rhs: &DenseMat<T>) -> DenseMat<T> {
                (&self).$f(rhs)
            }
        }
    };
}

elementwise!(Add, add, +);
elementwise!(Sub, sub, -);

impl<T: Real> AddAssign<&DenseMat<T>> for DenseMat<T> {
    fn add_assign(&mut self, rhs: &DenseMat<T>) {
        assert_eq!(self.shape(), rhs.shape());
        self.data.iter_mut().zip(&rhs.data).for_each(|(a, &b)| *a += b);
    }
}

impl<T: Real> SubAssign<&DenseMat<T>> for DenseMat<T> {
    fn sub_assign(&mut self, rhs: &DenseMat<T>) {
        assert_eq!(self.shape(), rhs.shape());
        self.data.iter_mut().zip(&rhs.data).for_each(|(a, &b)| *a -= b);
    }
}

impl<T: Real> Mul<&DenseMat<T>> for &DenseMat<T> {
    type Output = DenseMat<T>;
    fn mul(self, rhs: &DenseMat<T>) -> DenseMat<T> {
        self.matmul(rhs)
    }
}

impl<T: Real> Neg for &DenseMat<T> {
    type Output = DenseMat<T>;
    fn neg(self) -> DenseMat<T> {
        self.map(|x| -x)
    }
}

impl<T: Real> fmt::Debug for DenseMat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMat {}×{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for v in self.row(i) {
                write!(f, "{:>12.5e} ", v)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Serialized as nested row-major arrays of `f64`.
impl<T: Real> Serialize for DenseMat<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.rows))?;
        for i in 0..self.rows {
            let row: Vec<f64> = self.row(i).iter().map(|x| x.as_f64()).collect();
            seq.serialize_element(&row)?;
        }
        seq.end()
    }
}

impl<'de, T: Real> Deserialize<'de> for DenseMat<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let rows: Vec<Vec<T>> = rows.into_iter().map(|r| r.into_iter().map(T::c).collect()).collect();
        DenseMat::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMat<f64> {
        DenseMat::from_rows(rows).unwrap()
    }

    #[test]
    fn products_agree_with_transposes() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let b = m(&[&[1.0, 0.5], &[-1.0, 2.0], &[0.0, 3.0]]);
        let ab = a.matmul(&b);
        assert_eq!(ab, m(&[&[-1.0, 13.5], &[-1.0, 30.0]]));
        assert_eq!(a.matmul_t(&b.transpose()), ab);
        assert_eq!(a.transpose().t_matmul(&b), ab);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(m(&[&[1.0, 2.0], &[2.0, 1.0]]).cholesky().is_none());
        assert!(m(&[&[0.0]]).cholesky().is_none());
        let c = m(&[&[4.0, 2.0], &[2.0, 3.0]]).cholesky().unwrap();
        let x = c.solve_vec(&[2.0, 1.0]);
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lu_solves_nonsymmetric() {
        let a = m(&[&[0.0, 2.0], &[1.0, 1.0]]);
        let x = a.solve(&m(&[&[2.0], &[3.0]])).unwrap();
        assert_eq!(x, m(&[&[2.0], &[1.0]]));
        assert!(matches!(m(&[&[1.0, 2.0], &[2.0, 4.0]]).solve(&DenseMat::identity(2)), Err(Error::Singular(_))));
    }

    #[test]
    fn forward_substitution_matches_full_solve() {
        let a = m(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]);
        let b = m(&[&[1.0, 2.0], &[0.0, 1.0], &[3.0, -1.0]]);
        let c = a.cholesky().unwrap();
        let w = c.forward(&b);
        let lhs = w.t_matmul(&w);
        let rhs = b.t_matmul(&a.inverse().unwrap().matmul(&b));
        assert!((&lhs - &rhs).max_abs() < 1e-13);
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(DenseMat::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(DenseMat::<f64>::from_row_major(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn json_is_nested_rows() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.5]]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[1.0,2.0],[3.0,4.5]]");
        let back: DenseMat<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
    }
}
