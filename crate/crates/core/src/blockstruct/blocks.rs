use serde::{Serialize, Serializer};

use super::dense::DenseMat;
use crate::{Error, Real, Result};

/// `n` equally shaped blocks on the diagonal of an `(n·brows)×(n·bcols)`
/// matrix. The blocks live back to back in one row-major buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagMat<T> {
    n: usize,
    brows: usize,
    bcols: usize,
    data: Vec<T>,
}

/// `n` stacked `brows×cols` blocks, i.e. an `(n·brows)×cols` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TallBlockMat<T> {
    n: usize,
    brows: usize,
    cols: usize,
    data: Vec<T>,
}

macro_rules! block_storage {
    ($ty:ident, $bcols:ident) => {
        impl<T: Real> $ty<T> {
            #[inline]
            pub fn n(&self) -> usize {
                self.n
            }

            #[inline]
            pub fn brows(&self) -> usize {
                self.brows
            }

            #[inline]
            fn block_len(&self) -> usize {
                self.brows * self.$bcols
            }

            #[inline]
            pub fn block(&self, i: usize) -> &[T] {
                let len = self.block_len();
                &self.data[i * len..(i + 1) * len]
            }

            #[inline]
            pub fn block_mut(&mut self, i: usize) -> &mut [T] {
                let len = self.block_len();
                &mut self.data[i * len..(i + 1) * len]
            }

            /// Copy of block `i` as a standalone matrix.
            pub fn block_mat(&self, i: usize) -> DenseMat<T> {
                DenseMat::from_row_major(self.brows, self.$bcols, self.block(i).to_vec())
                    .expect("block shape")
            }

            pub fn blocks(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
                self.data.chunks_exact(self.block_len())
            }

            pub fn blocks_mut(&mut self) -> impl ExactSizeIterator<Item = &mut [T]> + '_ {
                let len = self.block_len();
                self.data.chunks_exact_mut(len)
            }

            pub fn as_slice(&self) -> &[T] {
                &self.data
            }

            pub fn set_block(&mut self, i: usize, m: &DenseMat<T>) -> Result<()> {
                if m.shape() != (self.brows, self.$bcols) {
                    return Err(Error::shape(format!(
                        "block {i}: got {:?}, expected {:?}",
                        m.shape(),
                        (self.brows, self.$bcols)
                    )));
                }
                self.block_mut(i).copy_from_slice(m.as_slice());
                Ok(())
            }

            pub fn is_finite(&self) -> bool {
                self.data.iter().all(|x| x.is_finite())
            }

            pub fn frobenius_norm(&self) -> T {
                self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
            }

            pub fn max_abs(&self) -> T {
                self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
            }

            pub fn scale(&self, s: T) -> Self {
                let mut out = self.clone();
                out.data.iter_mut().for_each(|x| *x *= s);
                out
            }

            pub fn cast<U: Real>(&self) -> $ty<U> {
                $ty {
                    n: self.n,
                    brows: self.brows,
                    $bcols: self.$bcols,
                    data: self.data.iter().map(|&x| U::c(x.as_f64())).collect(),
                }
            }
        }
    };
}

block_storage!(BlockDiagMat, bcols);
block_storage!(TallBlockMat, cols);

impl<T: Real> BlockDiagMat<T> {
    pub fn zeros(n: usize, brows: usize, bcols: usize) -> Self {
        Self { n, brows, bcols, data: vec![T::zero(); n * brows * bcols] }
    }

    pub fn identity(n: usize, c: usize) -> Self {
        Self::repeat(n, &DenseMat::identity(c))
    }

    /// `n` copies of `block`.
    pub fn repeat(n: usize, block: &DenseMat<T>) -> Self {
        let mut data = Vec::with_capacity(n * block.as_slice().len());
        for _ in 0..n {
            data.extend_from_slice(block.as_slice());
        }
        Self { n, brows: block.rows(), bcols: block.cols(), data }
    }

    pub fn from_blocks(blocks: &[DenseMat<T>]) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| Error::shape("no blocks"))?;
        let (brows, bcols) = first.shape();
        let mut data = Vec::with_capacity(blocks.len() * brows * bcols);
        for (i, b) in blocks.iter().enumerate() {
            if b.shape() != (brows, bcols) {
                return Err(Error::shape(format!(
                    "block {i} is {:?}, expected {:?}",
                    b.shape(),
                    (brows, bcols)
                )));
            }
            data.extend_from_slice(b.as_slice());
        }
        Ok(Self { n: blocks.len(), brows, bcols, data })
    }

    #[inline]
    pub fn bcols(&self) -> usize {
        self.bcols
    }

    pub fn block_shape(&self) -> (usize, usize) {
        (self.brows, self.bcols)
    }

    /// Shape of the embedded dense matrix.
    pub fn dense_shape(&self) -> (usize, usize) {
        (self.n * self.brows, self.n * self.bcols)
    }

    pub fn to_dense(&self) -> DenseMat<T> {
        let (rows, cols) = self.dense_shape();
        let mut out = DenseMat::zeros(rows, cols);
        for i in 0..self.n {
            let b = self.block(i);
            for r in 0..self.brows {
                for c in 0..self.bcols {
                    out[(i * self.brows + r, i * self.bcols + c)] = b[r * self.bcols + c];
                }
            }
        }
        out
    }

    /// `y = self · x` for a vector of length `n·bcols`.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n * self.bcols);
        let mut y = vec![T::zero(); self.n * self.brows];
        for (i, b) in self.blocks().enumerate() {
            super::kernels::mul_vec(
                b,
                &x[i * self.bcols..(i + 1) * self.bcols],
                &mut y[i * self.brows..(i + 1) * self.brows],
                self.brows,
                self.bcols,
            );
        }
        y
    }

    /// `self · m` for a dense `m` with `n·bcols` rows.
    pub fn mul_dense(&self, m: &DenseMat<T>) -> DenseMat<T> {
        assert_eq!(m.rows(), self.n * self.bcols);
        let w = m.cols();
        let mut out = DenseMat::zeros(self.n * self.brows, w);
        for (i, b) in self.blocks().enumerate() {
            let src = &m.as_slice()[i * self.bcols * w..(i + 1) * self.bcols * w];
            let dst = &mut out.as_mut_slice()[i * self.brows * w..(i + 1) * self.brows * w];
            super::kernels::mul_nn(b, src, dst, self.brows, self.bcols, w);
        }
        out
    }

    /// `m · selfᵀ` for a dense `m` with `n·bcols` columns.
    pub fn dense_mul_t(&self, m: &DenseMat<T>) -> DenseMat<T> {
        assert_eq!(m.cols(), self.n * self.bcols);
        let rows = m.rows();
        let (br, bc) = (self.brows, self.bcols);
        let mut out = DenseMat::zeros(rows, self.n * br);
        for r in 0..rows {
            let mrow = m.row(r);
            for (i, b) in self.blocks().enumerate() {
                let seg = &mrow[i * bc..(i + 1) * bc];
                for p in 0..br {
                    out[(r, i * br + p)] = super::kernels::dot(seg, &b[p * bc..(p + 1) * bc]);
                }
            }
        }
        out
    }

    /// Block-wise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if (self.n, self.brows, self.bcols) != (other.n, other.brows, other.bcols) {
            return Err(Error::shape(format!(
                "block-diagonal {}×({}×{}) vs {}×({}×{})",
                self.n, self.brows, self.bcols, other.n, other.brows, other.bcols
            )));
        }
        Ok(Self {
            n: self.n,
            brows: self.brows,
            bcols: self.bcols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn symmetrize(&mut self) {
        assert_eq!(self.brows, self.bcols);
        let c = self.brows;
        for b in self.blocks_mut() {
            super::kernels::symmetrize(b, c);
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.n, self.bcols, self.brows);
        for i in 0..self.n {
            let src = self.block(i).to_vec();
            let dst = out.block_mut(i);
            for r in 0..self.brows {
                for c in 0..self.bcols {
                    dst[c * self.brows + r] = src[r * self.bcols + c];
                }
            }
        }
        out
    }
}

impl<T: Real> TallBlockMat<T> {
    pub fn zeros(n: usize, brows: usize, cols: usize) -> Self {
        Self { n, brows, cols, data: vec![T::zero(); n * brows * cols] }
    }

    pub fn repeat(n: usize, block: &DenseMat<T>) -> Self {
        let mut data = Vec::with_capacity(n * block.as_slice().len());
        for _ in 0..n {
            data.extend_from_slice(block.as_slice());
        }
        Self { n, brows: block.rows(), cols: block.cols(), data }
    }

    pub fn from_blocks(blocks: &[DenseMat<T>]) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| Error::shape("no blocks"))?;
        let (brows, cols) = first.shape();
        let mut data = Vec::with_capacity(blocks.len() * brows * cols);
        for (i, b) in blocks.iter().enumerate() {
            if b.shape() != (brows, cols) {
                return Err(Error::shape(format!("block {i} is {:?}, expected {:?}", b.shape(), (brows, cols))));
            }
            data.extend_from_slice(b.as_slice());
        }
        Ok(Self { n: blocks.len(), brows, cols, data })
    }

    /// Splits a dense `(n·brows)×cols` matrix into stacked blocks.
    pub fn from_dense(m: &DenseMat<T>, brows: usize) -> Result<Self> {
        if brows == 0 || !m.rows().is_multiple_of(brows) {
            return Err(Error::shape(format!("{} rows not divisible by {brows}", m.rows())));
        }
        Ok(Self { n: m.rows() / brows, brows, cols: m.cols(), data: m.as_slice().to_vec() })
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn block_shape(&self) -> (usize, usize) {
        (self.brows, self.cols)
    }

    /// The stacked blocks are already laid out as the dense matrix.
    pub fn to_dense(&self) -> DenseMat<T> {
        DenseMat::from_row_major(self.n * self.brows, self.cols, self.data.clone()).expect("tall shape")
    }

    /// `self · v` for an `r`-vector; returns length `n·brows`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![T::zero(); self.n * self.brows];
        super::kernels::mul_vec(&self.data, v, &mut out, self.n * self.brows, self.cols);
        out
    }

    /// `selfᵀ · x` for `x` of length `n·brows`; a length-`cols` reduction.
    pub fn t_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n * self.brows);
        let mut out = vec![T::zero(); self.cols];
        super::kernels::mul_t_vec(&self.data, x, &mut out, self.cols, self.n * self.brows);
        out
    }
}

impl<T: Real> Serialize for BlockDiagMat<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let blocks: Vec<DenseMat<T>> = (0..self.n).map(|i| self.block_mat(i)).collect();
        blocks.serialize(s)
    }
}

impl<T: Real> Serialize for TallBlockMat<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let blocks: Vec<DenseMat<T>> = (0..self.n).map(|i| self.block_mat(i)).collect();
        blocks.serialize(s)
    }
}
