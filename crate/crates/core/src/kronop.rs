//! The Kronecker-product sum `Ã_k = Σ A_{x_i} ⊗ A_{y_i}` built from a
//! truncated SVD of `R(A)`, applied without forming the big matrix.
//!
//! With `X = array(x, n₂, n₁)` the product is `vec(Σ A_{y_i} X A_{x_i}ᵀ)`.
//! Because `vec` is column-major, the slice `x` read row-major is `Xᵀ`, so
//! the kernels work on `Xᵀ` directly and never copy the input.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_mtx_f64, write_mtx};
use crate::lowrank::TruncatedSvd;
use crate::metrics::{EngineKind, FlopCounter};
use crate::rearrange::{kron, BlockScheme};
use crate::tensorla::{array, gemm_nn, gemm_nt, gemm_tn, LinearOperator, Mat, Scalar};

/// Default entry cap for [`KroneckerSum::materialize`].
pub const MATERIALIZE_CAP: usize = 1 << 24;

/// One term `A_x ⊗ A_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct KronTerm {
    /// `m₁×n₁`.
    pub ax: Mat<f64>,
    /// `m₂×n₂`.
    pub ay: Mat<f64>,
}

#[derive(Debug, Clone)]
pub struct KroneckerSum {
    terms: Vec<KronTerm>,
    scheme: BlockScheme,
    flops: FlopCounter,
}

/// Contents of `meta.json` in a saved operator directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KronMeta {
    pub k: usize,
    pub scheme: BlockScheme,
    #[serde(default)]
    pub engine: Option<EngineKind>,
    #[serde(default)]
    pub k_p: Option<usize>,
}

impl KroneckerSum {
    /// Builds the operator from explicit terms.
    pub fn from_terms(terms: Vec<KronTerm>, scheme: BlockScheme) -> Result<Self> {
        for (i, t) in terms.iter().enumerate() {
            if t.ax.shape() != (scheme.m1, scheme.n1) || t.ay.shape() != (scheme.m2, scheme.n2) {
                return Err(Error::dim(format!(
                    "term {i} has factors {:?} and {:?} for scheme {:?}",
                    t.ax.shape(),
                    t.ay.shape(),
                    scheme
                )));
            }
        }
        Ok(KroneckerSum { terms, scheme, flops: FlopCounter::default() })
    }

    /// `A_{x_i} = σ_i·array(U_i, m₁, n₁)`, `A_{y_i} = array(V_i, m₂, n₂)`,
    /// cast to `f64` whatever the factor precision.
    pub fn assemble<T: Scalar>(svd: &TruncatedSvd<T>, scheme: &BlockScheme) -> Result<Self> {
        let (mbar, nbar) = scheme.rearranged_shape();
        if svd.u.rows() != mbar || svd.v.rows() != nbar {
            return Err(Error::dim(format!(
                "factors with {} and {} rows do not fit R(A) of shape {:?}",
                svd.u.rows(),
                svd.v.rows(),
                (mbar, nbar)
            )));
        }
        let mut terms = Vec::with_capacity(svd.k());
        for i in 0..svd.k() {
            let sigma = svd.sigma[i].as_f64();
            let u: Vec<f64> = svd.u.col(i).iter().map(|v| v.as_f64() * sigma).collect();
            let v: Vec<f64> = svd.v.col(i).iter().map(|v| v.as_f64()).collect();
            terms.push(KronTerm { ax: array(&u, scheme.m1, scheme.n1)?, ay: array(&v, scheme.m2, scheme.n2)? });
        }
        Self::from_terms(terms, *scheme)
    }

    pub fn k(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[KronTerm] {
        &self.terms
    }

    pub fn scheme(&self) -> &BlockScheme {
        &self.scheme
    }

    pub fn flops(&self) -> &FlopCounter {
        &self.flops
    }

    /// Keeps the first `k` terms.
    pub fn truncated(&self, k: usize) -> KroneckerSum {
        KroneckerSum {
            terms: self.terms[..k.min(self.k())].to_vec(),
            scheme: self.scheme,
            flops: FlopCounter::default(),
        }
    }

    /// Dense `Σ A_x ⊗ A_y`, refused beyond `cap` entries.
    pub fn materialize_with_cap(&self, cap: usize) -> Result<Mat<f64>> {
        let requested = self.scheme.big_m().saturating_mul(self.scheme.big_n());
        if requested > cap {
            return Err(Error::CapExceeded { requested, cap });
        }
        let mut out = Mat::zeros(self.scheme.big_m(), self.scheme.big_n());
        for t in &self.terms {
            out.add_assign(&kron(&t.ax, &t.ay))?;
        }
        Ok(out)
    }

    pub fn materialize(&self) -> Result<Mat<f64>> {
        self.materialize_with_cap(MATERIALIZE_CAP)
    }

    /// Writes `meta.json` plus `ax_<i>.mtx`/`ay_<i>.mtx` (one-based `i`).
    pub fn save(&self, dir: impl AsRef<Path>, engine: Option<EngineKind>, k_p: Option<usize>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let meta = KronMeta { k: self.k(), scheme: self.scheme, engine, k_p };
        fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
        for (i, t) in self.terms.iter().enumerate() {
            write_mtx(dir.join(format!("ax_{}.mtx", i + 1)), &t.ax)?;
            write_mtx(dir.join(format!("ay_{}.mtx", i + 1)), &t.ay)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, KronMeta)> {
        let dir = dir.as_ref();
        let meta: KronMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
        let mut terms = Vec::with_capacity(meta.k);
        for i in 1..=meta.k {
            terms.push(KronTerm {
                ax: read_mtx_f64(dir.join(format!("ax_{i}.mtx")))?,
                ay: read_mtx_f64(dir.join(format!("ay_{i}.mtx")))?,
            });
        }
        Ok((Self::from_terms(terms, meta.scheme)?, meta))
    }
}

impl LinearOperator for KroneckerSum {
    fn nrows(&self) -> usize {
        self.scheme.big_m()
    }

    fn ncols(&self) -> usize {
        self.scheme.big_n()
    }

    /// Row-major `outᵀ (m₁×m₂) = Σ A_x (Xᵀ A_yᵀ)`.
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let BlockScheme { m1, m2, n1, n2 } = self.scheme;
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut tmp = vec![0.0; n1 * m2];
        let mut count = 0u64;
        for t in &self.terms {
            tmp.iter_mut().for_each(|v| *v = 0.0);
            count += gemm_nt(n1, n2, m2, x, t.ay.data(), &mut tmp);
            count += gemm_nn(m1, n1, m2, t.ax.data(), &tmp, y);
        }
        self.flops.add_kp(2 * count);
    }

    /// Row-major `outᵀ (n₁×n₂) = Σ A_xᵀ (Yᵀ A_y)`.
    fn apply_t_into(&self, y: &[f64], x: &mut [f64]) {
        let BlockScheme { m1, m2, n1, n2 } = self.scheme;
        x.iter_mut().for_each(|v| *v = 0.0);
        let mut tmp = vec![0.0; m1 * n2];
        let mut count = 0u64;
        for t in &self.terms {
            tmp.iter_mut().for_each(|v| *v = 0.0);
            count += gemm_nn(m1, m2, n2, y, t.ay.data(), &mut tmp);
            count += gemm_tn(n1, m1, n2, t.ax.data(), &tmp, x);
        }
        self.flops.add_kp(2 * count);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{kp_apply_flops, kp_apply_t_flops};
    use crate::rearrange::rearrange;
    use crate::tensorla::{dot, gaussian_vec, seeded_rng, svd_small};

    fn random_op(scheme: BlockScheme, k: usize, seed: u64) -> KroneckerSum {
        let mut rng = seeded_rng(seed);
        let terms = (0..k)
            .map(|_| KronTerm {
                ax: Mat::gaussian(scheme.m1, scheme.n1, &mut rng),
                ay: Mat::gaussian(scheme.m2, scheme.n2, &mut rng),
            })
            .collect();
        KroneckerSum::from_terms(terms, scheme).unwrap()
    }

    #[test]
    fn identity_term() {
        let s = BlockScheme::square(3).unwrap();
        let op = KroneckerSum::from_terms(vec![KronTerm { ax: Mat::identity(3), ay: Mat::identity(3) }], s).unwrap();
        let x: Vec<f64> = (0..9).map(|v| v as f64).collect();
        assert_eq!(op.apply(&x).unwrap(), x);
        assert_eq!(op.apply(&[0.0; 9]).unwrap(), vec![0.0; 9]);
        assert_eq!(op.materialize().unwrap(), Mat::identity(9));
    }

    #[test]
    fn matches_materialized_product() {
        let s = BlockScheme::new(2, 3, 4, 2).unwrap();
        let op = random_op(s, 2, 5);
        let dense = op.materialize().unwrap();
        let mut rng = seeded_rng(6);
        let x: Vec<f64> = gaussian_vec(8, &mut rng);
        let y: Vec<f64> = gaussian_vec(6, &mut rng);
        let ax = op.apply(&x).unwrap();
        let aty = op.apply_t(&y).unwrap();
        for (a, b) in ax.iter().zip(dense.matvec(&x).unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in aty.iter().zip(dense.matvec_t(&y).unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
        let lhs = dot(&ax, &y);
        let rhs = dot(&x, &aty);
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn materialize_is_linear_in_terms() {
        let s = BlockScheme::new(2, 2, 3, 2).unwrap();
        let op = random_op(s, 2, 7);
        let one = KroneckerSum::from_terms(vec![op.terms()[0].clone()], s).unwrap();
        let two = KroneckerSum::from_terms(vec![op.terms()[1].clone()], s).unwrap();
        let mut sum = one.materialize().unwrap();
        sum.add_assign(&two.materialize().unwrap()).unwrap();
        assert_eq!(sum, op.materialize().unwrap());
    }

    #[test]
    fn materialize_cap() {
        let s = BlockScheme::square(3).unwrap();
        let op = random_op(s, 1, 1);
        assert!(matches!(op.materialize_with_cap(80), Err(Error::CapExceeded { requested: 81, cap: 80 })));
    }

    #[test]
    fn assemble_exact_tsvd_reproduces_matrix() {
        let mut rng = seeded_rng(10);
        let a: Mat<f64> = Mat::gaussian(4, 4, &mut rng);
        let s = BlockScheme::square(2).unwrap();
        let svd = svd_small(&rearrange(&a, &s).unwrap()).unwrap();
        let op = KroneckerSum::assemble(&svd, &s).unwrap();
        let back = op.materialize().unwrap();
        assert!(back.sub(&a).unwrap().frobenius_norm() < 1e-12 * a.frobenius_norm());
    }

    #[test]
    fn rank_one_assembly_recovers_kron() {
        let mut rng = seeded_rng(11);
        let b: Mat<f64> = Mat::gaussian(3, 3, &mut rng);
        let c: Mat<f64> = Mat::gaussian(3, 3, &mut rng);
        let a = kron(&b, &c);
        let s = BlockScheme::square(3).unwrap();
        let svd = svd_small(&rearrange(&a, &s).unwrap()).unwrap().truncate(1);
        let op = KroneckerSum::assemble(&svd, &s).unwrap();
        assert_eq!(op.k(), 1);
        let diff = op.materialize().unwrap().sub(&a).unwrap().frobenius_norm();
        assert!(diff < 1e-12 * a.frobenius_norm());
    }

    #[test]
    fn flop_counter_matches_closed_form() {
        for (i, &(m1, m2, n1, n2, k)) in [(3, 4, 5, 2, 1), (2, 2, 2, 2, 3), (6, 1, 2, 5, 2)].iter().enumerate() {
            let s = BlockScheme::new(m1, m2, n1, n2).unwrap();
            let op = random_op(s, k, i as u64);
            op.apply(&vec![1.0; n1 * n2]).unwrap();
            assert_eq!(op.flops().snapshot().kp_apply, kp_apply_flops(m1, m2, n1, n2, k));
            op.flops().reset();
            op.apply_t(&vec![1.0; m1 * m2]).unwrap();
            assert_eq!(op.flops().snapshot().kp_apply, kp_apply_t_flops(m1, m2, n1, n2, k));
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = BlockScheme::new(2, 3, 2, 3).unwrap();
        let op = random_op(s, 3, 2);
        op.save(dir.path(), Some(EngineKind::Egkb), Some(5)).unwrap();
        assert!(dir.path().join("ax_3.mtx").exists());
        let (back, meta) = KroneckerSum::load(dir.path()).unwrap();
        assert_eq!(back.terms(), op.terms());
        assert_eq!(meta.k_p, Some(5));
        assert_eq!(meta.engine, Some(EngineKind::Egkb));
    }

    #[test]
    fn dimension_checks() {
        let s = BlockScheme::square(2).unwrap();
        let bad = KronTerm { ax: Mat::identity(3), ay: Mat::identity(2) };
        assert!(matches!(KroneckerSum::from_terms(vec![bad], s), Err(Error::Dimension(_))));
        let op = random_op(s, 1, 0);
        assert!(op.apply(&[1.0; 3]).is_err());
        assert!(op.apply_t(&[1.0; 5]).is_err());
    }
}
