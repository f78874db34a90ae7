use super::blocks::{BlockDiagMat, TallBlockMat};
use super::dense::DenseMat;
use super::kernels;
use crate::{Error, Real, Result};

/// Keeps the `c×c` diagonal blocks of a square matrix and drops the rest.
pub fn project_d<T: Real>(m: &DenseMat<T>, c: usize) -> Result<BlockDiagMat<T>> {
    if !m.is_square() {
        return Err(Error::shape(format!("project_d needs a square matrix, got {:?}", m.shape())));
    }
    if c == 0 || !m.rows().is_multiple_of(c) {
        return Err(Error::shape(format!("{} rows not divisible by block size {c}", m.rows())));
    }
    let n = m.rows() / c;
    let mut out = BlockDiagMat::zeros(n, c, c);
    for i in 0..n {
        let b = out.block_mut(i);
        for r in 0..c {
            for s in 0..c {
                b[r * c + s] = m[(i * c + r, i * c + s)];
            }
        }
    }
    Ok(out)
}

/// Block `i` of the result is `Aᵢ Pᵢ Aᵢᵀ`.
pub fn bd_sandwich<T: Real>(a: &BlockDiagMat<T>, p: &BlockDiagMat<T>) -> Result<BlockDiagMat<T>> {
    let (ar, ac) = a.block_shape();
    let (pr, pc) = p.block_shape();
    if a.n() != p.n() || ac != pr || pr != pc {
        return Err(Error::shape(format!(
            "sandwich {}×({ar}×{ac}) around {}×({pr}×{pc})",
            a.n(),
            p.n()
        )));
    }
    let mut out = BlockDiagMat::zeros(a.n(), ar, ar);
    let mut ap = vec![T::zero(); ar * pc];
    for i in 0..a.n() {
        kernels::mul_nn(a.block(i), p.block(i), &mut ap, ar, ac, pc);
        kernels::mul_nt(&ap, a.block(i), out.block_mut(i), ar, pc, ar);
    }
    Ok(out)
}

/// Right-hand sides that [`bd_chol_solve`] can act on block by block.
pub trait BlockRhs<T: Real>: Clone {
    fn n_blocks(&self) -> usize;
    fn rhs_block_shape(&self) -> (usize, usize);
    fn rhs_block_mut(&mut self, i: usize) -> &mut [T];
}

impl<T: Real> BlockRhs<T> for BlockDiagMat<T> {
    fn n_blocks(&self) -> usize {
        self.n()
    }
    fn rhs_block_shape(&self) -> (usize, usize) {
        self.block_shape()
    }
    fn rhs_block_mut(&mut self, i: usize) -> &mut [T] {
        self.block_mut(i)
    }
}

impl<T: Real> BlockRhs<T> for TallBlockMat<T> {
    fn n_blocks(&self) -> usize {
        self.n()
    }
    fn rhs_block_shape(&self) -> (usize, usize) {
        self.block_shape()
    }
    fn rhs_block_mut(&mut self, i: usize) -> &mut [T] {
        self.block_mut(i)
    }
}

/// Lower Cholesky factors of every block of a block-diagonal SPD matrix.
#[derive(Clone, Debug)]
pub struct BlockCholesky<T> {
    factors: BlockDiagMat<T>,
}

impl<T: Real> BlockCholesky<T> {
    /// Fails with [`Error::NotPositiveDefinite`] naming the first bad block.
    pub fn new(m: &BlockDiagMat<T>, what: &'static str) -> Result<Self> {
        let (r, c) = m.block_shape();
        if r != c {
            return Err(Error::shape(format!("cholesky of non-square {r}×{c} blocks")));
        }
        let mut factors = m.clone();
        for (i, b) in factors.blocks_mut().enumerate() {
            if !kernels::cholesky_in_place(b, r) {
                return Err(Error::NotPositiveDefinite { what, block: i });
            }
        }
        Ok(Self { factors })
    }

    pub fn n(&self) -> usize {
        self.factors.n()
    }

    pub fn dim(&self) -> usize {
        self.factors.brows()
    }

    pub fn factor(&self, i: usize) -> &[T] {
        self.factors.block(i)
    }

    pub fn solve<R: BlockRhs<T>>(&self, rhs: &R) -> Result<R> {
        let d = self.dim();
        let (rr, rc) = rhs.rhs_block_shape();
        if rhs.n_blocks() != self.n() || rr != d {
            return Err(Error::shape(format!(
                "solve {}×({d}×{d}) against {}×({rr}×{rc})",
                self.n(),
                rhs.n_blocks()
            )));
        }
        let mut out = rhs.clone();
        for i in 0..self.n() {
            kernels::cholesky_solve_in_place(self.factor(i), d, out.rhs_block_mut(i), rc);
        }
        Ok(out)
    }

    /// Solves block-wise against a stacked vector of length `n·d`.
    pub fn solve_vec(&self, rhs: &[T]) -> Vec<T> {
        let d = self.dim();
        assert_eq!(rhs.len(), self.n() * d);
        let mut out = rhs.to_vec();
        for (i, chunk) in out.chunks_exact_mut(d).enumerate() {
            kernels::cholesky_solve_in_place(self.factor(i), d, chunk, 1);
        }
        out
    }
}

/// Block `i` of the result solves `Mᵢ Xᵢ = RHSᵢ` through a Cholesky
/// factorization of `Mᵢ`.
pub fn bd_chol_solve<T: Real, R: BlockRhs<T>>(m: &BlockDiagMat<T>, rhs: &R) -> Result<R> {
    BlockCholesky::new(m, "bd_chol_solve")?.solve(rhs)
}

/// `Σᵢ Tᵢᵀ Wᵢ Tᵢ`, summed with a fixed pairwise tree.
pub fn tall_reduce<T: Real>(t: &TallBlockMat<T>, w: &BlockDiagMat<T>) -> Result<DenseMat<T>> {
    let (tr, r) = t.block_shape();
    let (wr, wc) = w.block_shape();
    if t.n() != w.n() || wr != wc || wr != tr {
        return Err(Error::shape(format!(
            "tall_reduce {}×({tr}×{r}) with weights {}×({wr}×{wc})",
            t.n(),
            w.n()
        )));
    }
    let mut contribs = vec![T::zero(); t.n() * r * r];
    let mut wt = vec![T::zero(); tr * r];
    for i in 0..t.n() {
        kernels::mul_nn(w.block(i), t.block(i), &mut wt, tr, tr, r);
        kernels::mul_tn(t.block(i), &wt, &mut contribs[i * r * r..(i + 1) * r * r], r, tr, r);
    }
    let sum = pairwise_sum(&mut contribs, r * r);
    DenseMat::from_row_major(r, r, sum.to_vec())
}

/// Sums consecutive chunks of length `len` with a balanced binary tree,
/// reusing `buf` as scratch. Returns the first chunk, holding the total.
pub(crate) fn pairwise_sum<T: Real>(buf: &mut [T], len: usize) -> &[T] {
    let mut count = buf.len() / len;
    if count == 0 {
        buf.fill(T::zero());
        return &buf[..0];
    }
    while count > 1 {
        let half = count / 2;
        for k in 0..half {
            let (lo, hi) = buf.split_at_mut((2 * k + 1) * len);
            let dst_off = k * len;
            let src_a = 2 * k * len;
            // lo[src_a..] + hi[..len] -> write into position k
            for j in 0..len {
                let v = lo[src_a + j] + hi[j];
                lo[dst_off + j] = v;
            }
        }
        if count % 2 == 1 {
            let src = (count - 1) * len;
            let dst = half * len;
            buf.copy_within(src..src + len, dst);
        }
        count = half + count % 2;
    }
    &buf[..len]
}

/// Either kind of operand accepted by [`block_fro_distance`].
#[derive(Clone, Copy)]
pub enum MatRef<'a, T> {
    Block(&'a BlockDiagMat<T>),
    Dense(&'a DenseMat<T>),
}

impl<'a, T> From<&'a BlockDiagMat<T>> for MatRef<'a, T> {
    fn from(m: &'a BlockDiagMat<T>) -> Self {
        MatRef::Block(m)
    }
}

impl<'a, T> From<&'a DenseMat<T>> for MatRef<'a, T> {
    fn from(m: &'a DenseMat<T>) -> Self {
        MatRef::Dense(m)
    }
}

/// `‖a − b‖_F`, embedding block-diagonal operands into dense shape.
pub fn block_fro_distance<'a, T: Real>(
    a: impl Into<MatRef<'a, T>>,
    b: impl Into<MatRef<'a, T>>,
) -> Result<T> {
    match (a.into(), b.into()) {
        (MatRef::Block(a), MatRef::Block(b)) => Ok(a.sub(b)?.frobenius_norm()),
        (MatRef::Dense(a), MatRef::Dense(b)) => {
            if a.shape() != b.shape() {
                return Err(Error::shape(format!("distance {:?} vs {:?}", a.shape(), b.shape())));
            }
            Ok((a - b).frobenius_norm())
        }
        (MatRef::Block(bd), MatRef::Dense(d)) | (MatRef::Dense(d), MatRef::Block(bd)) => {
            if bd.dense_shape() != d.shape() {
                return Err(Error::shape(format!(
                    "distance block-diagonal {:?} vs dense {:?}",
                    bd.dense_shape(),
                    d.shape()
                )));
            }
            let (br, bc) = bd.block_shape();
            let mut acc = T::zero();
            for r in 0..d.rows() {
                let blk = r / br;
                for (col, &v) in d.row(r).iter().enumerate() {
                    let e = if col / bc == blk {
                        v - bd.block(blk)[(r % br) * bc + col % bc]
                    } else {
                        v
                    };
                    acc += e * e;
                }
            }
            Ok(acc.sqrt())
        }
    }
}
