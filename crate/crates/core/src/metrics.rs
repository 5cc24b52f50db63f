//! Image-quality measures, flop accounting and the closed-form cost model.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tensorla::norm2;

/// A decibel value that may be infinite. Infinite values serialize as the
/// strings `"inf"` / `"-inf"` rather than as a float sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Decibels {
    Finite(f64),
    #[serde(deserialize_with = "de_inf")]
    Infinite(InfSign),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfSign {
    Positive,
    Negative,
}

fn de_inf<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<InfSign, D::Error> {
    let s = String::deserialize(d)?;
    match s.as_str() {
        "inf" => Ok(InfSign::Positive),
        "-inf" => Ok(InfSign::Negative),
        other => Err(serde::de::Error::custom(format!("expected inf or -inf, got {other}"))),
    }
}

impl Serialize for Decibels {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Decibels::Finite(v) => s.serialize_f64(*v),
            Decibels::Infinite(InfSign::Positive) => s.serialize_str("inf"),
            Decibels::Infinite(InfSign::Negative) => s.serialize_str("-inf"),
        }
    }
}

impl Decibels {
    /// `scale · log10(num/den)` with the zero cases mapped to infinities.
    fn ratio(scale: f64, num: f64, den: f64) -> Decibels {
        match (num == 0.0, den == 0.0) {
            (_, true) if num > 0.0 => Decibels::Infinite(InfSign::Positive),
            (true, false) => Decibels::Infinite(InfSign::Negative),
            _ => Decibels::Finite(scale * (num / den).log10()),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Decibels::Finite(v) => v,
            Decibels::Infinite(InfSign::Positive) => f64::INFINITY,
            Decibels::Infinite(InfSign::Negative) => f64::NEG_INFINITY,
        }
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    Ok(())
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Signal-to-noise ratio `10 log10(‖b_true‖² / ‖b_true − b‖²)` in dB.
pub fn snr(b_true: &[f64], b: &[f64]) -> Result<Decibels> {
    check_len(b_true, b)?;
    let num = norm2(b_true);
    let den = diff_norm(b_true, b);
    if num == 0.0 && den == 0.0 {
        return Err(Error::Undefined("SNR of two zero signals".into()));
    }
    Ok(Decibels::ratio(10.0, num * num, den * den))
}

/// Relative error `‖x − x_true‖ / ‖x_true‖`.
pub fn re(x: &[f64], x_true: &[f64]) -> Result<f64> {
    check_len(x, x_true)?;
    let den = norm2(x_true);
    if den == 0.0 {
        return Err(Error::Undefined("relative error against a zero reference".into()));
    }
    Ok(diff_norm(x, x_true) / den)
}

/// Improvement in SNR, `20 log10(‖b − x_true‖ / ‖x − x_true‖)` in dB.
pub fn isnr(x: &[f64], b: &[f64], x_true: &[f64]) -> Result<Decibels> {
    check_len(x, x_true)?;
    check_len(b, x_true)?;
    let num = diff_norm(b, x_true);
    let den = diff_norm(x, x_true);
    if num == 0.0 && den == 0.0 {
        return Err(Error::Undefined("ISNR with x == b == x_true".into()));
    }
    Ok(Decibels::ratio(20.0, num, den))
}

/// Relative change `‖x_new − x_old‖ / ‖x_old‖`.
pub fn rc(x_new: &[f64], x_old: &[f64]) -> Result<f64> {
    check_len(x_new, x_old)?;
    let den = norm2(x_old);
    if den == 0.0 {
        return Err(Error::Undefined("relative change from a zero iterate".into()));
    }
    Ok(diff_norm(x_new, x_old) / den)
}

/// Per-operator flop accumulator (multiply-adds count as two flops).
#[derive(Debug, Default)]
pub struct FlopCounter {
    kp_apply: AtomicU64,
    dense_apply: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCounts {
    pub kp_apply: u64,
    pub dense_apply: u64,
}

impl FlopCounter {
    pub fn add_kp(&self, flops: u64) {
        self.kp_apply.fetch_add(flops, Ordering::Relaxed);
    }

    pub fn add_dense(&self, flops: u64) {
        self.dense_apply.fetch_add(flops, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> FlopCounts {
        FlopCounts {
            kp_apply: self.kp_apply.load(Ordering::Relaxed),
            dense_apply: self.dense_apply.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.kp_apply.store(0, Ordering::Relaxed);
        self.dense_apply.store(0, Ordering::Relaxed);
    }

    pub fn merge(&self, other: &FlopCounts) {
        self.add_kp(other.kp_apply);
        self.add_dense(other.dense_apply);
    }
}

impl Clone for FlopCounter {
    fn clone(&self) -> Self {
        let c = FlopCounter::default();
        c.merge(&self.snapshot());
        c
    }
}

impl std::ops::Add for FlopCounts {
    type Output = FlopCounts;
    fn add(self, o: FlopCounts) -> FlopCounts {
        FlopCounts { kp_apply: self.kp_apply + o.kp_apply, dense_apply: self.dense_apply + o.dense_apply }
    }
}

/// Flops of one forward Kronecker-sum product: `2(m₂N + Mn₁)k`.
pub fn kp_apply_flops(m1: usize, m2: usize, n1: usize, n2: usize, k: usize) -> u64 {
    let (big_m, big_n) = ((m1 * m2) as u64, (n1 * n2) as u64);
    2 * (m2 as u64 * big_n + big_m * n1 as u64) * k as u64
}

/// Flops of one transpose Kronecker-sum product: `2(n₂M + Nm₁)k`.
pub fn kp_apply_t_flops(m1: usize, m2: usize, n1: usize, n2: usize, k: usize) -> u64 {
    let (big_m, big_n) = ((m1 * m2) as u64, (n1 * n2) as u64);
    2 * (n2 as u64 * big_m + big_n * m1 as u64) * k as u64
}

/// Flops of a dense product with a `rows`×`cols` matrix: `2·rows·cols`.
pub fn dense_apply_flops(rows: usize, cols: usize) -> u64 {
    2 * rows as u64 * cols as u64
}

/// Which engine produced the Kronecker factors; `ρ` in the cost ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Egkb,
    Rsvd,
}

impl std::str::FromStr for EngineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "egkb" => Ok(EngineKind::Egkb),
            "rsvd" => Ok(EngineKind::Rsvd),
            other => Err(Error::InvalidConfig(format!("unknown engine `{other}`"))),
        }
    }
}

impl EngineKind {
    pub fn rho(self) -> f64 {
        match self {
            EngineKind::Egkb => 1.0,
            EngineKind::Rsvd => 2.0,
        }
    }
}

/// Problem dimensions entering the reconstruction cost model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostModel {
    pub m: usize,
    pub n: usize,
    /// Rows of each stacked difference block.
    pub p: usize,
    pub m1: usize,
    pub m2: usize,
    pub n1: usize,
    pub n2: usize,
    pub k: usize,
    pub k_p: usize,
    pub engine: EngineKind,
    pub iota_total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Speedups {
    pub sb_speedup: f64,
    pub alg_speedup: f64,
    /// The rounded `1.5·ι_total/k_p` estimate quoted alongside the ratio.
    pub alg_speedup_prose: f64,
}

/// Per-method totals: TSVD of R(A), forming Ã_k, all CGLS iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodCost {
    pub tsvd: f64,
    pub form_terms: f64,
    pub cgls_total: f64,
}

impl CostModel {
    /// Square-image model with `m₁ = m₂ = n₁ = n₂ = side` and `P = side(side−1)`.
    pub fn square(side: usize, k: usize, k_p: usize, engine: EngineKind, iota_total: usize) -> Self {
        let n = side * side;
        CostModel {
            m: n,
            n,
            p: side * side.saturating_sub(1),
            m1: side,
            m2: side,
            n1: side,
            n2: side,
            k,
            k_p,
            engine,
            iota_total,
        }
    }

    /// Rows of the augmented system, `M + 2P`.
    pub fn t(&self) -> usize {
        self.m + 2 * self.p
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.m, self.n, self.m1, self.m2, self.n1, self.n2, self.k, self.k_p];
        if fields.contains(&0) {
            return Err(Error::InvalidConfig("cost model dimensions must be positive".into()));
        }
        if self.m != self.m1 * self.m2 || self.n != self.n1 * self.n2 {
            return Err(Error::InvalidConfig("M = m1·m2 and N = n1·n2 must hold".into()));
        }
        if self.k_p < self.k {
            return Err(Error::InvalidConfig("k_p must be at least k".into()));
        }
        Ok(())
    }

    /// Rows of the cost table for direct use of `A`, and for the chosen engine.
    pub fn method_costs(&self) -> (MethodCost, MethodCost) {
        let (m, n) = (self.m as f64, self.n as f64);
        let iota = self.iota_total as f64;
        let direct = MethodCost { tsvd: 0.0, form_terms: 0.0, cgls_total: 4.0 * self.t() as f64 * n * iota };
        let nbar = (self.m2 * self.n2) as f64;
        let mbar = (self.m1 * self.n1) as f64;
        let kp_cost = 4.0 * ((self.m2 as f64) * n + m * self.n1 as f64) * self.k as f64 * iota;
        let approx = MethodCost {
            tsvd: 4.0 * self.engine.rho() * nbar * nbar * self.k_p as f64,
            form_terms: mbar * self.k as f64,
            cgls_total: kp_cost,
        };
        (direct, approx)
    }
}

/// Predicted speedups: `(N+2P)/(2kn₁)` for SB alone, and
/// `4(N+2P)Nι / (4ρN²k_p)` for SB with A against building Ã_k.
pub fn predict_speedups(cm: &CostModel) -> Result<Speedups> {
    cm.validate()?;
    let n = cm.n as f64;
    let p = cm.p as f64;
    let sb_speedup = (n + 2.0 * p) / (2.0 * cm.k as f64 * cm.n1 as f64);
    let alg_speedup =
        4.0 * (n + 2.0 * p) * n * cm.iota_total as f64 / (4.0 * cm.engine.rho() * n * n * cm.k_p as f64);
    let alg_speedup_prose = 1.5 * cm.iota_total as f64 / cm.k_p as f64;
    Ok(Speedups { sb_speedup, alg_speedup, alg_speedup_prose })
}

/// Dominant flop count for a k-term EGKB TSVD of an `mbar`×`nbar` matrix.
pub fn egkb_tsvd_flops(mbar: usize, nbar: usize, k: usize, k_p: usize) -> f64 {
    let (mb, nb, k, kp) = (mbar as f64, nbar as f64, k as f64, k_p as f64);
    4.0 * mb * nb * kp + 2.0 * mb * k * k + 2.0 * nb * (k * k + kp * kp) + 12.0 * kp.powi(3)
}

/// Dominant flop count for a k-term RSVD TSVD (one power iteration).
pub fn rsvd_tsvd_flops(mbar: usize, nbar: usize, k: usize, k_p: usize) -> f64 {
    let (mb, nb, k, kp) = (mbar as f64, nbar as f64, k as f64, k_p as f64);
    8.0 * mb * nb * kp + 2.0 * mb * kp * k + nb * kp * kp - 3.0 * kp * kp + 9.0 * mb * kp * kp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_examples() {
        let b_true = vec![3.0, 4.0];
        let b = vec![6.0, 8.0];
        assert_eq!(snr(&b_true, &b).unwrap(), Decibels::Finite(0.0));
        assert_eq!(snr(&b_true, &b_true).unwrap(), Decibels::Infinite(InfSign::Positive));
    }

    #[test]
    fn snr_noise_levels() {
        // ‖η‖ = level·‖b_true‖ ⇒ SNR = −20 log10(level)
        let b_true = vec![1.0, 0.0, 0.0];
        for (level, expect) in [(0.07, 23.098), (0.04, 27.959)] {
            let b = vec![1.0, level, 0.0];
            let v = snr(&b_true, &b).unwrap().value();
            assert!((v - expect).abs() < 1e-3, "{level}: {v}");
        }
    }

    #[test]
    fn re_isnr_rc_examples() {
        let xt = vec![1.0, 2.0, 2.0];
        assert_eq!(re(&xt, &xt).unwrap(), 0.0);
        let b = vec![2.0, 2.0, 2.0];
        assert_eq!(isnr(&xt, &b, &xt).unwrap(), Decibels::Infinite(InfSign::Positive));
        assert_eq!(isnr(&b, &b, &xt).unwrap(), Decibels::Finite(0.0));
        assert!(re(&xt, &[0.0; 3]).is_err());
        assert!(rc(&xt, &[0.0; 3]).is_err());

        let x = vec![1.5, 2.5, 1.0];
        let hand_re = 1.5f64.sqrt() / 3.0;
        assert!((re(&x, &xt).unwrap() - hand_re).abs() < 1e-15);
        let hand_isnr = 20.0 * (1.0f64 / 1.5f64.sqrt()).log10();
        assert!((isnr(&x, &b, &xt).unwrap().value() - hand_isnr).abs() < 1e-12);
        let hand_rc = 1.5f64.sqrt() / 3.0;
        assert!((rc(&x, &xt).unwrap() - hand_rc).abs() < 1e-15);
    }

    #[test]
    fn decibels_json() {
        let v = serde_json::to_string(&[Decibels::Finite(1.5), Decibels::Infinite(InfSign::Positive)]).unwrap();
        assert_eq!(v, r#"[1.5,"inf"]"#);
        let back: Vec<Decibels> = serde_json::from_str(&v).unwrap();
        assert_eq!(back[1], Decibels::Infinite(InfSign::Positive));
    }

    #[test]
    fn speedup_examples() {
        let mut cm = CostModel::square(100, 5, 7, EngineKind::Egkb, 464);
        cm.p = 10_000;
        let s = predict_speedups(&cm).unwrap();
        assert_eq!(s.sb_speedup, 30.0);
        assert!((s.alg_speedup - 3.0 * 464.0 / 7.0).abs() < 1e-12);
        assert!((s.alg_speedup - 198.857).abs() < 1e-3);
        assert!((s.alg_speedup_prose - 99.43).abs() < 1e-2);

        // break-even when k·n1 = (N+2P)/2
        let mut even = CostModel::square(10, 1, 1, EngineKind::Egkb, 1);
        even.p = 100;
        even.k = 150 / 10;
        even.k_p = even.k;
        assert_eq!(predict_speedups(&even).unwrap().sb_speedup, 1.0);
    }

    #[test]
    fn sb_speedup_decreases_in_k() {
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let s = predict_speedups(&CostModel::square(64, k, k + 2, EngineKind::Rsvd, 100)).unwrap();
            assert!(s.sb_speedup < last);
            last = s.sb_speedup;
        }
    }

    #[test]
    fn flop_counter_merge() {
        let c = FlopCounter::default();
        c.add_kp(10);
        let d = c.clone();
        d.merge(&FlopCounts { kp_apply: 1, dense_apply: 2 });
        assert_eq!(d.snapshot(), FlopCounts { kp_apply: 11, dense_apply: 2 });
        assert_eq!(c.snapshot().kp_apply, 10);
        c.reset();
        assert_eq!(c.snapshot(), FlopCounts::default());
    }
}
