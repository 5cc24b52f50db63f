//! Dense linear-algebra kernels over 32- and 64-bit element precision.
//!
//! [`Mat`] is a row-major container whose element type carries the precision.
//! The Matlab-style `vec`/`array` reshapes are column-major and are the only
//! place where the two orderings meet.

use std::fmt::{Debug, Display};

use num_traits::Float;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowrank::TruncatedSvd;
use crate::metrics::FlopCounter;

/// Element precision of a matrix or vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    /// Byte width, also used as the precision code in `mtx` headers.
    pub fn bytes(self) -> usize {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" | "sp" | "f32" => Ok(Precision::Single),
            "double" | "dp" | "f64" => Ok(Precision::Double),
            other => Err(Error::config(format!("unknown precision `{other}`"))),
        }
    }
}

/// Floating point element type. Implemented for `f32` and `f64` only.
pub trait Scalar:
    Float + Debug + Display + Default + Send + Sync + std::iter::Sum + 'static
{
    const PRECISION: Precision;
    fn cast_from(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const PRECISION: Precision = Precision::Single;
    #[inline]
    fn cast_from(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Scalar for f64 {
    const PRECISION: Precision = Precision::Double;
    #[inline]
    fn cast_from(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Debug for Mat<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Mat<{:?}>({}x{})", T::PRECISION, self.rows, self.cols)?;
        if self.rows * self.cols <= 64 {
            for r in 0..self.rows {
                write!(f, "\n  {:?}", self.row(r))?;
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Mat<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} scalars cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    /// Builds a matrix from nested rows; panics on ragged input (test helper).
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.as_ref().len(), c, "ragged rows");
            data.extend(row.as_ref().iter().map(|&v| T::cast_from(v)));
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn diag(values: &[T]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        Mat { rows, cols, data: gaussian_vec(rows * cols, rng) }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_col(&mut self, j: usize, values: &[T]) {
        for (i, &v) in values.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    /// First `k` columns.
    pub fn leading_cols(&self, k: usize) -> Mat<T> {
        let k = k.min(self.cols);
        Mat::from_fn(self.rows, k, |i, j| self.get(i, j))
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn scale(&mut self, alpha: T) {
        self.data.iter_mut().for_each(|v| *v = *v * alpha);
    }

    pub fn sub(&self, other: &Mat<T>) -> Result<Mat<T>> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Ok(Mat { rows: self.rows, cols: self.cols, data })
    }

    pub fn add_assign(&mut self, other: &Mat<T>) -> Result<()> {
        self.check_same_shape(other)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a = *a + b);
        Ok(())
    }

    fn check_same_shape(&self, other: &Mat<T>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(format!(
                "shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat<T>) -> Result<Mat<T>> {
        if self.cols != other.rows {
            return Err(Error::dim(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        gemm_nn(
            self.rows,
            self.cols,
            other.cols,
            &self.data,
            &other.data,
            &mut out.data,
        );
        Ok(out)
    }

    /// `selfᵀ * other` without forming the transpose.
    pub fn t_matmul(&self, other: &Mat<T>) -> Result<Mat<T>> {
        if self.rows != other.rows {
            return Err(Error::dim(format!(
                "cannot multiply transpose of {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = Mat::zeros(self.cols, other.cols);
        for p in 0..self.rows {
            let arow = self.row(p);
            let brow = other.row(p);
            for (i, &a) in arow.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                axpy(a, brow, out.row_mut(i));
            }
        }
        Ok(out)
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::dim(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        let mut y = vec![T::zero(); self.rows];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn matvec_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
    }

    /// `selfᵀ * y`.
    pub fn matvec_t(&self, y: &[T]) -> Result<Vec<T>> {
        if y.len() != self.rows {
            return Err(Error::dim(format!(
                "vector of length {} against {} rows",
                y.len(),
                self.rows
            )));
        }
        let mut x = vec![T::zero(); self.cols];
        self.matvec_t_into(y, &mut x);
        Ok(x)
    }

    pub(crate) fn matvec_t_into(&self, y: &[T], x: &mut [T]) {
        x.iter_mut().for_each(|v| *v = T::zero());
        for (i, &yi) in y.iter().enumerate() {
            if yi != T::zero() {
                axpy(yi, self.row(i), x);
            }
        }
    }

    /// Frobenius norm, evaluated in `f64` as a function of the multiset of
    /// entries only, so any permutation of the entries gives the same bits.
    pub fn frobenius_norm(&self) -> f64 {
        let mut sq: Vec<f64> = self.data.iter().map(|v| v.as_f64() * v.as_f64()).collect();
        sq.sort_unstable_by(|a, b| a.total_cmp(b));
        neumaier_sum(sq.into_iter()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.as_f64().abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise rounding to another precision.
    pub fn cast<U: Scalar>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::cast_from(v.as_f64())).collect(),
        }
    }
}

/// `c += a * b` for row-major `a` (m×k), `b` (k×n), `c` (m×n). Returns the
/// number of multiply-adds performed.
pub(crate) fn gemm_nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) -> u64 {
    let mut count = 0u64;
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            axpy(aip, &b[p * n..(p + 1) * n], crow);
            count += n as u64;
        }
    }
    count
}

/// `c += a * bᵀ` for row-major `a` (m×k), `b` (n×k), `c` (m×n). Returns the
/// number of multiply-adds performed.
pub(crate) fn gemm_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) -> u64 {
    let mut count = 0u64;
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] = c[i * n + j] + dot(arow, &b[j * k..(j + 1) * k]);
            count += k as u64;
        }
    }
    count
}

/// `c += aᵀ * b` for row-major `a` (k×m), `b` (k×n), `c` (m×n). Returns the
/// number of multiply-adds performed.
pub(crate) fn gemm_tn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) -> u64 {
    let mut count = 0u64;
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            axpy(a[p * m + i], brow, &mut c[i * n..(i + 1) * n]);
            count += n as u64;
        }
    }
    count
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators let the compiler vectorize without reassociating
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] = acc[0] + a[i] * b[i];
        acc[1] = acc[1] + a[i + 1] * b[i + 1];
        acc[2] = acc[2] + a[i + 2] * b[i + 2];
        acc[3] = acc[3] + a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s = s + a[i] * b[i];
    }
    s
}

#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

#[inline]
pub fn norm2<T: Scalar>(x: &[T]) -> T {
    dot(x, x).sqrt()
}

pub fn scale<T: Scalar>(alpha: T, x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = *v * alpha);
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Column-major stacking of the columns of `m`.
pub fn vec<T: Scalar>(m: &Mat<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(m.rows * m.cols);
    for j in 0..m.cols {
        for i in 0..m.rows {
            out.push(m.data[i * m.cols + j]);
        }
    }
    out
}

/// Column-major unstacking of `v` into an `r`×`c` matrix; inverse of [`vec`].
pub fn array<T: Scalar>(v: &[T], r: usize, c: usize) -> Result<Mat<T>> {
    if v.len() != r * c {
        return Err(Error::dim(format!(
            "vector of length {} cannot be reshaped to {r}x{c}",
            v.len()
        )));
    }
    let mut m = Mat::zeros(r, c);
    for j in 0..c {
        for i in 0..r {
            m.data[i * c + j] = v[j * r + i];
        }
    }
    Ok(m)
}

/// Seeded generator used everywhere randomness is needed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal samples, drawn in `f64` and rounded to `T`.
pub fn gaussian_vec<T: Scalar>(len: usize, rng: &mut impl Rng) -> Vec<T> {
    (0..len)
        .map(|_| T::cast_from(rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// Drop tolerance for rank detection: ε·√rows·(max column norm).
pub fn drop_tolerance<T: Scalar>(rows: usize, max_col_norm: f64) -> f64 {
    T::epsilon().as_f64() * (rows as f64).sqrt() * max_col_norm
}

/// Orthonormal basis for the columns of `m` via modified Gram-Schmidt with
/// one reorthogonalization pass.
pub fn orthonormalize<T: Scalar>(m: &Mat<T>) -> Result<Mat<T>> {
    if m.rows < m.cols {
        return Err(Error::dim(format!(
            "cannot orthonormalize {} columns in dimension {}",
            m.cols, m.rows
        )));
    }
    let cols = columns(m);
    let max_norm = cols.iter().map(|c| norm2(c).as_f64()).fold(0.0, f64::max);
    let tol = drop_tolerance::<T>(m.rows, max_norm);
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(m.cols);
    for (j, mut c) in cols.into_iter().enumerate() {
        for _pass in 0..2 {
            for q in &basis {
                let h = dot(q, &c);
                axpy(-h, q, &mut c);
            }
        }
        let nrm = norm2(&c);
        if !(nrm.as_f64() > tol) {
            return Err(Error::RankDeficient { column: j, norm: nrm.as_f64(), tol });
        }
        scale(T::one() / nrm, &mut c);
        basis.push(c);
    }
    Ok(from_columns(m.rows, &basis))
}

/// Columns of `m` as owned contiguous vectors.
pub fn columns<T: Scalar>(m: &Mat<T>) -> Vec<Vec<T>> {
    let t = m.transpose();
    t.data.chunks(m.rows.max(1)).take(m.cols).map(|c| c.to_vec()).collect()
}

/// Assembles a `rows`×`cols.len()` matrix from column vectors.
pub fn from_columns<T: Scalar>(rows: usize, cols: &[Vec<T>]) -> Mat<T> {
    let mut m = Mat::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_col(j, c);
    }
    m
}

/// Limits for [`svd_small_with`].
#[derive(Debug, Clone, Copy)]
pub struct SvdOptions {
    /// Largest accepted `min(rows, cols)`.
    pub max_min_dim: usize,
    pub max_sweeps: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions { max_min_dim: 4096, max_sweeps: 80 }
    }
}

/// Full thin SVD of a small dense matrix (one-sided Jacobi).
pub fn svd_small<T: Scalar>(m: &Mat<T>) -> Result<TruncatedSvd<T>> {
    svd_small_with(m, SvdOptions::default())
}

pub fn svd_small_with<T: Scalar>(m: &Mat<T>, opts: SvdOptions) -> Result<TruncatedSvd<T>> {
    let k = m.rows.min(m.cols);
    if k > opts.max_min_dim {
        return Err(Error::CapExceeded { requested: k, cap: opts.max_min_dim });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite { context: "svd_small input".into() });
    }
    if m.rows >= m.cols {
        jacobi_svd(m, opts.max_sweeps)
    } else {
        let t = jacobi_svd(&m.transpose(), opts.max_sweeps)?;
        Ok(TruncatedSvd { u: t.v, sigma: t.sigma, v: t.u })
    }
}

fn jacobi_svd<T: Scalar>(m: &Mat<T>, max_sweeps: usize) -> Result<TruncatedSvd<T>> {
    let (rows, n) = m.shape();
    let mut w = columns(m);
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            e
        })
        .collect();
    let eps = T::epsilon();
    // Columns at rounding level carry no information and are left alone;
    // rotating them against each other need not settle.
    let fro: T = w.iter().map(|c| dot(c, c)).sum::<T>().sqrt();
    let negligible = eps * fro;
    let negligible_sq = negligible * negligible;
    let mut converged = n < 2;
    for _sweep in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == T::zero()
                    || alpha.min(beta) <= negligible_sq
                    || gamma.abs() <= eps * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let two = T::one() + T::one();
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence { sweeps: max_sweeps });
    }

    let mut order: Vec<(usize, T)> = w.iter().map(|c| norm2(c)).enumerate().collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));

    let mut ucols: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut vcols: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (slot, &(j, s)) in order.iter().enumerate() {
        sigma.push(s);
        vcols.push(v[j].clone());
        if s > negligible {
            let mut u = w[j].clone();
            scale(T::one() / s, &mut u);
            ucols.push(u);
        } else {
            ucols.push(Vec::new());
            missing.push(slot);
        }
    }
    complete_basis(rows, &mut ucols, &missing);
    Ok(TruncatedSvd { u: from_columns(rows, &ucols), sigma, v: from_columns(n, &vcols) })
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let x = *a;
        let y = *b;
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Fills the empty slots of `cols` with unit vectors orthogonal to the rest.
fn complete_basis<T: Scalar>(rows: usize, cols: &mut [Vec<T>], missing: &[usize]) {
    let half = T::cast_from(0.5);
    let mut candidate = 0;
    for &slot in missing {
        while candidate < rows {
            let mut e = vec![T::zero(); rows];
            e[candidate] = T::one();
            candidate += 1;
            for _pass in 0..2 {
                for c in cols.iter().filter(|c| !c.is_empty()) {
                    let h = dot(c, &e);
                    axpy(-h, c, &mut e);
                }
            }
            let nrm = norm2(&e);
            if nrm > half {
                scale(T::one() / nrm, &mut e);
                cols[slot] = e;
                break;
            }
        }
    }
}

/// Matrix-free linear map acting on `f64` vectors.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// `y = A x`; lengths are the caller's responsibility.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    /// `x = Aᵀ y`; lengths are the caller's responsibility.
    fn apply_t_into(&self, y: &[f64], x: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols() {
            return Err(Error::dim(format!(
                "operator expects {} inputs, got {}",
                self.ncols(),
                x.len()
            )));
        }
        let mut y = vec![0.0; self.nrows()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    fn apply_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.nrows() {
            return Err(Error::dim(format!(
                "transpose expects {} inputs, got {}",
                self.nrows(),
                y.len()
            )));
        }
        let mut x = vec![0.0; self.ncols()];
        self.apply_t_into(y, &mut x);
        Ok(x)
    }
}

impl<O: LinearOperator + ?Sized> LinearOperator for &O {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_into(x, y)
    }
    fn apply_t_into(&self, y: &[f64], x: &mut [f64]) {
        (**self).apply_t_into(y, x)
    }
}

/// Dense matrix as an operator, with multiply-add accounting.
#[derive(Debug)]
pub struct DenseOperator {
    mat: Mat<f64>,
    flops: FlopCounter,
}

impl DenseOperator {
    pub fn new(mat: Mat<f64>) -> Self {
        DenseOperator { mat, flops: FlopCounter::default() }
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.mat
    }

    pub fn flops(&self) -> &FlopCounter {
        &self.flops
    }
}

impl LinearOperator for DenseOperator {
    fn nrows(&self) -> usize {
        self.mat.rows()
    }
    fn ncols(&self) -> usize {
        self.mat.cols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let mut count = 0u64;
        for (i, yi) in y.iter_mut().enumerate() {
            let row = self.mat.row(i);
            *yi = dot(row, x);
            count += row.len() as u64;
        }
        self.flops.add_dense(2 * count);
    }
    fn apply_t_into(&self, y: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        let mut count = 0u64;
        for (i, &yi) in y.iter().enumerate() {
            let row = self.mat.row(i);
            axpy(yi, row, x);
            count += row.len() as u64;
        }
        self.flops.add_dense(2 * count);
    }
}
