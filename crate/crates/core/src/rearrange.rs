//! Block scheme and the Van Loan–Pitsianis rearrangement `R(A)`.
//!
//! `A` (`m₁m₂ × n₁n₂`) is viewed as an `m₁×n₁` grid of `m₂×n₂` blocks
//! `A_{i,j}`. Row `j·m₁ + i` of `R(A)` is `vec(A_{i,j})ᵀ` (zero-based), so a
//! Kronecker product `B ⊗ C` becomes the rank-one matrix `vec(B) vec(C)ᵀ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorla::{Mat, Scalar};

/// Block grid `m1×n1` of `m2×n2` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockScheme {
    pub m1: usize,
    pub m2: usize,
    pub n1: usize,
    pub n2: usize,
}

impl BlockScheme {
    pub fn new(m1: usize, m2: usize, n1: usize, n2: usize) -> Result<Self> {
        if m1 == 0 || m2 == 0 || n1 == 0 || n2 == 0 {
            return Err(Error::config("block scheme sizes must be positive"));
        }
        Ok(BlockScheme { m1, m2, n1, n2 })
    }

    /// Scheme for an `n×n` image operator: `m1 = m2 = n1 = n2 = n`.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n, n, n)
    }

    /// Rows of `A`.
    pub fn big_m(&self) -> usize {
        self.m1 * self.m2
    }

    /// Columns of `A`.
    pub fn big_n(&self) -> usize {
        self.n1 * self.n2
    }

    /// Shape of `R(A)`: `(m1·n1, m2·n2)`.
    pub fn rearranged_shape(&self) -> (usize, usize) {
        (self.m1 * self.n1, self.m2 * self.n2)
    }

    /// Position in `A` of entry `(row, col)` of `R(A)`.
    #[inline]
    pub fn source_index(&self, row: usize, col: usize) -> (usize, usize) {
        let (j, i) = (row / self.m1, row % self.m1);
        let (b, a) = (col / self.m2, col % self.m2);
        (i * self.m2 + a, j * self.n2 + b)
    }
}

/// Builds `R(A)`.
pub fn rearrange<T: Scalar>(a: &Mat<T>, s: &BlockScheme) -> Result<Mat<T>> {
    if a.shape() != (s.big_m(), s.big_n()) {
        return Err(Error::dim(format!(
            "matrix {:?} does not match block scheme {:?}",
            a.shape(),
            s
        )));
    }
    let (rows, cols) = s.rearranged_shape();
    let src = a.data();
    let width = a.cols();
    let mut out = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let (r, c) = s.source_index(row, col);
            out.push(src[r * width + c]);
        }
    }
    Mat::new(rows, cols, out)
}

/// Inverse of [`rearrange`].
pub fn inverse_rearrange<T: Scalar>(rm: &Mat<T>, s: &BlockScheme) -> Result<Mat<T>> {
    if rm.shape() != s.rearranged_shape() {
        return Err(Error::dim(format!(
            "matrix {:?} is not a rearrangement for scheme {:?}",
            rm.shape(),
            s
        )));
    }
    let mut a = Mat::zeros(s.big_m(), s.big_n());
    let width = a.cols();
    let (rows, cols) = rm.shape();
    let dst = a.data_mut();
    for row in 0..rows {
        let src = rm.row(row);
        for (col, &v) in src.iter().enumerate().take(cols) {
            let (r, c) = s.source_index(row, col);
            dst[r * width + c] = v;
        }
    }
    Ok(a)
}

/// Kronecker product `b ⊗ c`.
pub fn kron<T: Scalar>(b: &Mat<T>, c: &Mat<T>) -> Mat<T> {
    let (bm, bn) = b.shape();
    let (cm, cn) = c.shape();
    Mat::from_fn(bm * cm, bn * cn, |r, col| b.get(r / cm, col / cn) * c.get(r % cm, col % cn))
}
