//! Truncated SVD engines for the rearranged operator: the enlarged
//! Golub–Kahan bidiagonalization (EGKB) with the geometric-mean rank rule,
//! and the randomized SVD with power iteration. Both run at the precision of
//! the input matrix.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tensorla::{
    axpy, dot, from_columns, gaussian_vec, norm2, orthonormalize, scale, seeded_rng, svd_small, Mat,
    Scalar,
};

/// `U diag(σ) Vᵀ` with `k` columns; `σ` is non-negative and descending.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd<T: Scalar> {
    pub u: Mat<T>,
    pub sigma: Vec<T>,
    pub v: Mat<T>,
}

impl<T: Scalar> TruncatedSvd<T> {
    pub fn k(&self) -> usize {
        self.sigma.len()
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(&self, k: usize) -> TruncatedSvd<T> {
        let k = k.min(self.k());
        TruncatedSvd { u: self.u.leading_cols(k), sigma: self.sigma[..k].to_vec(), v: self.v.leading_cols(k) }
    }

    pub fn cast<U: Scalar>(&self) -> TruncatedSvd<U> {
        TruncatedSvd {
            u: self.u.cast(),
            sigma: self.sigma.iter().map(|s| U::cast_from(s.as_f64())).collect(),
            v: self.v.cast(),
        }
    }

    pub fn reconstruct(&self) -> Mat<T> {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (l, &s) in self.sigma.iter().enumerate() {
                let v = us.get(i, l) * s;
                us.set(i, l, v);
            }
        }
        us.matmul(&self.v.transpose()).expect("factor shapes are consistent")
    }

    /// `‖B − UΣVᵀ‖_F`, accumulated in `f64` one row at a time.
    pub fn residual_norm(&self, b: &Mat<T>) -> Result<f64> {
        if b.shape() != (self.u.rows(), self.v.rows()) {
            return Err(Error::dim(format!(
                "matrix {:?} against factors {}x{}",
                b.shape(),
                self.u.rows(),
                self.v.rows()
            )));
        }
        let k = self.k();
        let vt: Vec<Vec<f64>> = (0..k).map(|l| self.v.col(l).iter().map(|x| x.as_f64()).collect()).collect();
        let mut acc = 0.0;
        let mut row = vec![0.0; b.cols()];
        for i in 0..b.rows() {
            row.iter_mut().zip(b.row(i)).for_each(|(r, x)| *r = x.as_f64());
            for (l, vl) in vt.iter().enumerate() {
                let coef = self.u.get(i, l).as_f64() * self.sigma[l].as_f64();
                axpy(-coef, vl, &mut row);
            }
            acc += dot(&row, &row);
        }
        Ok(acc.sqrt())
    }

    /// `‖B − UΣVᵀ‖_F / ‖B‖_F`.
    pub fn relative_residual(&self, b: &Mat<T>) -> Result<f64> {
        let nb = b.frobenius_norm();
        if nb == 0.0 {
            return Err(Error::Undefined("relative residual of a zero matrix".into()));
        }
        Ok(self.residual_norm(b)? / nb)
    }
}

/// Reorthogonalization used by the bidiagonalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reorth {
    /// Right vectors `q_j` only (modified Gram–Schmidt).
    OneSided,
    /// Both `s_j` and `q_j`; needed to keep single precision runs orthogonal.
    Full,
}

impl std::str::FromStr for Reorth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-sided" | "onesided" => Ok(Reorth::OneSided),
            "full" => Ok(Reorth::Full),
            other => Err(Error::config(format!("unknown reorthogonalization `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EgkbConfig {
    pub k_max: usize,
    /// Oversampling: the Krylov space is enlarged to `k + p`.
    pub p: usize,
    pub tau_egkb: f64,
    pub k_min: usize,
    pub reorth: Reorth,
    pub seed: u64,
}

impl Default for EgkbConfig {
    fn default() -> Self {
        EgkbConfig { k_max: 30, p: 2, tau_egkb: 1e-8, k_min: 2, reorth: Reorth::OneSided, seed: 0 }
    }
}

impl EgkbConfig {
    /// Defaults for the given precision: single precision gets full reorthogonalization.
    pub fn for_precision<T: Scalar>() -> Self {
        let reorth = match T::PRECISION {
            crate::tensorla::Precision::Single => Reorth::Full,
            crate::tensorla::Precision::Double => Reorth::OneSided,
        };
        EgkbConfig { reorth, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::config("k_max must be at least 1"));
        }
        if self.k_min > self.k_max {
            return Err(Error::config(format!("k_min {} exceeds k_max {}", self.k_min, self.k_max)));
        }
        if !(self.tau_egkb >= 0.0) {
            return Err(Error::config("tau_egkb must be non-negative"));
        }
        Ok(())
    }

    pub fn rule(&self) -> RankRule {
        RankRule { tau: self.tau_egkb, k_min: self.k_min, k_max: self.k_max }
    }
}

/// Why the rank was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// `ν_{k+1} > ν_k`.
    NuRose,
    /// `ν_k < τ`.
    NuBelowTol,
    /// The rule never fired up to `k_max`.
    HitKmax,
    /// The Krylov space became invariant before the rule fired.
    Breakdown,
}

/// Parameters of the rank rule `k = min_j {ν_{j+1} > ν_j or ν_j < τ}`,
/// evaluated only for `k_min ≤ j ≤ k_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankRule {
    pub tau: f64,
    pub k_min: usize,
    pub k_max: usize,
}

impl RankRule {
    /// Evaluates the rule once `ν_j` (one-based `j = nus.len()`) is known.
    /// The rise test settles candidate `j − 1`, the tolerance test candidate `j`.
    fn step(&self, nus: &[f64]) -> Option<(usize, StopReason)> {
        let j = nus.len();
        if j >= 2 {
            let cand = j - 1;
            if cand >= self.k_min && cand <= self.k_max && nus[j - 1] > nus[j - 2] {
                return Some((cand, StopReason::NuRose));
            }
        }
        if j >= self.k_min && j <= self.k_max && nus[j - 1] < self.tau {
            return Some((j, StopReason::NuBelowTol));
        }
        if j > self.k_max {
            return Some((self.k_max, StopReason::HitKmax));
        }
        None
    }
}

/// Applies the rank rule to a full `ν` history (`nus[0]` is `ν_1`).
pub fn auto_rank(nus: &[f64], rule: &RankRule) -> Result<(usize, StopReason)> {
    if nus.len() < 2 {
        return Err(Error::config("the rank rule needs at least two ν values"));
    }
    for j in 1..=nus.len() {
        if let Some(hit) = rule.step(&nus[..j]) {
            return Ok(hit);
        }
    }
    Ok((rule.k_max, StopReason::HitKmax))
}

fn ser_nus<S: Serializer>(nus: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let v: Vec<Option<f64>> = nus.iter().map(|&x| x.is_finite().then_some(x)).collect();
    v.serialize(s)
}

fn de_nus<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    let v: Vec<Option<f64>> = Vec::deserialize(d)?;
    Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
}

/// History of the bidiagonalization scalars. Lists are one-based in `j`:
/// entry `0` belongs to `j = 1`. `ν_1` has no predecessor and is stored as
/// `+∞` (serialized as `null`), so it never triggers the rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgkbTrace {
    pub alphas: Vec<f64>,
    pub ts: Vec<f64>,
    pub zetas: Vec<f64>,
    #[serde(serialize_with = "ser_nus", deserialize_with = "de_nus")]
    pub nus: Vec<f64>,
    pub chosen_k: usize,
    pub stop_reason: StopReason,
    /// Step `j` at which `t_j` or `α_j` vanished, if it happened.
    pub breakdown_at: Option<usize>,
    /// Number of right Lanczos vectors used in the projected SVD.
    pub k_p: usize,
}

/// Golub–Kahan lower bidiagonalization `B Q_j = S_{j+1} C_j`.
pub struct Bidiagonalization<'a, T> {
    b: &'a Mat<T>,
    reorth: Reorth,
    s: Vec<Vec<T>>,
    q: Vec<Vec<T>>,
    alphas: Vec<T>,
    ts: Vec<T>,
    breakdown_tol: T,
}

/// Outcome of one bidiagonalization step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkbStep {
    Continue,
    /// `t_j` vanished: `s_j` was not added.
    LeftBreakdown,
    /// `α_j` vanished: `s_j` was added but `q_j` was not.
    RightBreakdown,
}

impl<'a, T: Scalar> Bidiagonalization<'a, T> {
    /// Step 1: `t₁ = ‖y‖, s₁ = y/t₁, α₁ = ‖Bᵀs₁‖, q₁ = Bᵀs₁/α₁`.
    pub fn start(b: &'a Mat<T>, y0: &[T], reorth: Reorth) -> Result<Self> {
        if y0.len() != b.rows() {
            return Err(Error::dim(format!("start vector of length {} for {} rows", y0.len(), b.rows())));
        }
        let t1 = norm2(y0);
        if t1 == T::zero() {
            return Err(Error::ZeroVector("EGKB start vector".into()));
        }
        if !t1.is_finite() {
            return Err(Error::NonFinite { context: "EGKB start vector".into() });
        }
        let norm_b: f64 = b.data().iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
        let dim = b.rows().max(b.cols()) as f64;
        let breakdown_tol = T::cast_from(T::epsilon().as_f64() * dim * norm_b);

        let mut s1 = y0.to_vec();
        scale(T::one() / t1, &mut s1);
        let mut q1 = b.matvec_t(&s1)?;
        let a1 = norm2(&q1);
        if !(a1 > breakdown_tol) {
            return Err(Error::Undefined("start vector is annihilated by Bᵀ".into()));
        }
        scale(T::one() / a1, &mut q1);
        Ok(Bidiagonalization { b, reorth, s: vec![s1], q: vec![q1], alphas: vec![a1], ts: vec![t1], breakdown_tol })
    }

    /// Current `j` (number of right vectors).
    pub fn steps(&self) -> usize {
        self.q.len()
    }

    /// Advances to `j + 1`: computes `s_{j+1}, t_{j+1}, q_{j+1}, α_{j+1}`.
    pub fn step(&mut self) -> Result<GkbStep> {
        let prev_q = self.q.last().expect("started");
        let prev_s = self.s.last().expect("started");
        let alpha_prev = *self.alphas.last().expect("started");

        let mut s = self.b.matvec(prev_q)?;
        axpy(-alpha_prev, prev_s, &mut s);
        if self.reorth == Reorth::Full {
            mgs(&self.s, &mut s);
        }
        let t = norm2(&s);
        if !t.is_finite() {
            return Err(Error::NonFinite { context: format!("EGKB t_{}", self.s.len() + 1) });
        }
        if !(t > self.breakdown_tol) {
            return Ok(GkbStep::LeftBreakdown);
        }
        scale(T::one() / t, &mut s);

        let mut q = self.b.matvec_t(&s)?;
        axpy(-t, prev_q, &mut q);
        mgs(&self.q, &mut q);
        let alpha = norm2(&q);
        if !alpha.is_finite() {
            return Err(Error::NonFinite { context: format!("EGKB alpha_{}", self.q.len() + 1) });
        }
        self.s.push(s);
        self.ts.push(t);
        if !(alpha > self.breakdown_tol) {
            self.alphas.push(alpha);
            return Ok(GkbStep::RightBreakdown);
        }
        scale(T::one() / alpha, &mut q);
        self.q.push(q);
        self.alphas.push(alpha);
        Ok(GkbStep::Continue)
    }

    /// `S` with the first `cols` left vectors.
    pub fn s_basis(&self, cols: usize) -> Mat<T> {
        from_columns(self.b.rows(), &self.s[..cols.min(self.s.len())])
    }

    /// `Q` with the first `cols` right vectors.
    pub fn q_basis(&self, cols: usize) -> Mat<T> {
        from_columns(self.b.cols(), &self.q[..cols.min(self.q.len())])
    }

    /// Lower bidiagonal `C` of shape `rows × cols` with diagonal `α` and
    /// subdiagonal `t_2, t_3, …`.
    pub fn bidiagonal(&self, rows: usize, cols: usize) -> Mat<T> {
        let mut c = Mat::zeros(rows, cols);
        for i in 0..cols {
            if i < rows {
                c.set(i, i, self.alphas[i]);
            }
            if i + 1 < rows {
                c.set(i + 1, i, self.ts[i + 1]);
            }
        }
        c
    }

    fn left_count(&self) -> usize {
        self.s.len()
    }
}

/// Modified Gram–Schmidt sweep of `v` against `basis`.
fn mgs<T: Scalar>(basis: &[Vec<T>], v: &mut [T]) {
    for b in basis {
        let h = dot(b, v);
        axpy(-h, b, v);
    }
}

/// Result of [`egkb`].
#[derive(Debug, Clone)]
pub struct EgkbOutput<T: Scalar> {
    pub svd: TruncatedSvd<T>,
    pub trace: EgkbTrace,
}

/// EGKB with a seeded standard normal start vector.
pub fn egkb_seeded<T: Scalar>(b: &Mat<T>, cfg: &EgkbConfig) -> Result<EgkbOutput<T>> {
    let mut rng = seeded_rng(cfg.seed);
    let y0: Vec<T> = gaussian_vec(b.rows(), &mut rng);
    egkb(b, cfg, &y0)
}

/// Enlarged Golub–Kahan bidiagonalization.
///
/// The rank `k` is fixed by the `ν` rule (or by `k_max`); the iteration then
/// keeps going until `k + p` right vectors exist, takes the SVD of the
/// `(k_p+1)×k_p` bidiagonal matrix and truncates the lifted factors to `k`
/// terms. An invariant Krylov space ends the run early with the exact
/// factorization found so far.
pub fn egkb<T: Scalar>(b: &Mat<T>, cfg: &EgkbConfig, y0: &[T]) -> Result<EgkbOutput<T>> {
    cfg.validate()?;
    let rule = cfg.rule();
    let mut gkb = Bidiagonalization::start(b, y0, cfg.reorth)?;

    let mut zetas = vec![gkb.alphas[0].as_f64() * gkb.ts[0].as_f64()];
    let mut nus = vec![f64::INFINITY];
    let mut decided: Option<(usize, StopReason)> = None;
    let mut breakdown_at = None;
    let hard_cap = b.rows().min(b.cols()) + 1;

    loop {
        let j = gkb.steps() + 1;
        let outcome = gkb.step()?;
        if outcome != GkbStep::Continue {
            breakdown_at = Some(j);
            if outcome == GkbStep::RightBreakdown {
                zetas.push(gkb.alphas[j - 1].as_f64() * gkb.ts[j - 1].as_f64());
                nus.push((zetas[j - 1] * zetas[j - 2]).sqrt());
            }
            break;
        }
        let zeta = gkb.alphas[j - 1].as_f64() * gkb.ts[j - 1].as_f64();
        zetas.push(zeta);
        nus.push((zeta * zetas[j - 2]).sqrt());
        if decided.is_none() {
            decided = rule.step(&nus);
        }
        if let Some((k, _)) = decided {
            if gkb.steps() > k + cfg.p {
                break;
            }
        }
        if j >= hard_cap {
            break;
        }
    }

    let available = gkb.steps();
    let (mut k, mut reason) = decided.unwrap_or((available.min(cfg.k_max), StopReason::Breakdown));
    if breakdown_at.is_some() && k > available {
        k = available;
        reason = StopReason::Breakdown;
    }
    if decided.is_none() && breakdown_at.is_none() {
        reason = StopReason::HitKmax;
    }
    let nq = (k + cfg.p).min(available);
    let ns = (nq + 1).min(gkb.left_count());

    let c = gkb.bidiagonal(ns, nq);
    let small = svd_small(&c)?;
    let s_mat = gkb.s_basis(ns);
    let q_mat = gkb.q_basis(nq);
    let u = s_mat.matmul(&small.u.leading_cols(k))?;
    let v = q_mat.matmul(&small.v.leading_cols(k))?;
    let svd = TruncatedSvd { u, sigma: small.sigma[..k].to_vec(), v };

    let trace = EgkbTrace {
        alphas: gkb.alphas.iter().map(|v| v.as_f64()).collect(),
        ts: gkb.ts.iter().map(|v| v.as_f64()).collect(),
        zetas,
        nus,
        chosen_k: k,
        stop_reason: reason,
        breakdown_at,
        k_p: nq,
    };
    Ok(EgkbOutput { svd, trace })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RsvdConfig {
    pub k: usize,
    pub p: usize,
    /// Power iterations.
    pub q: usize,
    pub seed: u64,
}

impl Default for RsvdConfig {
    fn default() -> Self {
        RsvdConfig { k: 5, p: 2, q: 1, seed: 0 }
    }
}

impl RsvdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("RSVD target rank must be at least 1"));
        }
        Ok(())
    }
}

/// RSVD factors with `Ū = Q·U_small` left unmultiplied.
#[derive(Debug, Clone)]
pub struct RsvdFactors<T: Scalar> {
    /// Orthonormal range basis (`M̄×k_p`, or `N̄×k_p` when run on `Bᵀ`).
    pub q: Mat<T>,
    /// Leading `k` columns of the small SVD's left factor (`k_p×k`).
    pub u_small: Mat<T>,
    pub sigma: Vec<T>,
    /// Other-side singular vectors (`N̄×k`, or `M̄×k` when run on `Bᵀ`).
    pub w: Mat<T>,
    /// The sampling ran on `Bᵀ` because `B` was wide.
    pub transposed: bool,
}

impl<T: Scalar> RsvdFactors<T> {
    pub fn k(&self) -> usize {
        self.sigma.len()
    }

    /// Forms `Ū = Q U_small` and returns the factors in `B`'s orientation.
    pub fn materialize(&self) -> TruncatedSvd<T> {
        let lifted = self.q.matmul(&self.u_small).expect("shapes are consistent");
        if self.transposed {
            TruncatedSvd { u: self.w.clone(), sigma: self.sigma.clone(), v: lifted }
        } else {
            TruncatedSvd { u: lifted, sigma: self.sigma.clone(), v: self.w.clone() }
        }
    }
}

/// `B · X` for a thin `X`, one matrix-vector product per column.
fn thin_product<T: Scalar>(b: &Mat<T>, x: &Mat<T>) -> Result<Mat<T>> {
    let cols: Result<Vec<Vec<T>>> = (0..x.cols()).map(|j| b.matvec(&x.col(j))).collect();
    Ok(from_columns(b.rows(), &cols?))
}

/// `Bᵀ · Y` for a thin `Y`.
fn thin_product_t<T: Scalar>(b: &Mat<T>, y: &Mat<T>) -> Result<Mat<T>> {
    let cols: Result<Vec<Vec<T>>> = (0..y.cols()).map(|j| b.matvec_t(&y.col(j))).collect();
    Ok(from_columns(b.cols(), &cols?))
}

/// Randomized SVD, returning factors with `Ū` kept as `Q·U_small`.
pub fn rsvd_factors<T: Scalar>(b: &Mat<T>, cfg: &RsvdConfig) -> Result<RsvdFactors<T>> {
    cfg.validate()?;
    let transposed = b.rows() < b.cols();
    let owned;
    let b = if transposed {
        owned = b.transpose();
        &owned
    } else {
        b
    };
    let (mbar, nbar) = b.shape();
    let k_p = cfg.k + cfg.p;
    if k_p > nbar {
        return Err(Error::config(format!("k + p = {k_p} exceeds the smaller dimension {nbar}")));
    }
    let mut rng = seeded_rng(cfg.seed);
    let f = Mat::new(nbar, k_p, gaussian_vec(nbar * k_p, &mut rng))?;

    let mut y = orthonormalize(&thin_product(b, &f)?)?;
    for _ in 0..cfg.q {
        let z = orthonormalize(&thin_product_t(b, &y)?)?;
        y = orthonormalize(&thin_product(b, &z)?)?;
    }
    // Hᵀ = Bᵀ Q is N̄×k_p; its SVD Hᵀ = W Σ Zᵀ gives H = Z Σ Wᵀ.
    let ht = thin_product_t(b, &y)?;
    let small = svd_small(&ht)?;
    debug_assert_eq!(small.u.rows(), nbar);
    let _ = mbar;
    Ok(RsvdFactors {
        q: y,
        u_small: small.v.leading_cols(cfg.k),
        sigma: small.sigma[..cfg.k].to_vec(),
        w: small.u.leading_cols(cfg.k),
        transposed,
    })
}

/// Randomized SVD with `Ū` materialized.
pub fn rsvd<T: Scalar>(b: &Mat<T>, cfg: &RsvdConfig) -> Result<TruncatedSvd<T>> {
    Ok(rsvd_factors(b, cfg)?.materialize())
}
