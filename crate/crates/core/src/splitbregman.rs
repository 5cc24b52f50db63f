//! Split Bregman outer iterations for anisotropic and isotropic TV.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cgls::{cgls_solve, CglsConfig};
use crate::error::{Error, Result};
use crate::metrics::{isnr, rc, re, Decibels};
use crate::regularizers::{aug_rhs, AugmentedOp, DiffOp};
use crate::tensorla::LinearOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Aniso,
    Iso,
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aniso" => Ok(Variant::Aniso),
            "iso" => Ok(Variant::Iso),
            other => Err(Error::config(format!("unknown variant `{other}`"))),
        }
    }
}

/// `shrink(w, v) = sign(w)·max(|w| − v, 0)`.
#[inline]
pub fn shrink(w: f64, v: f64) -> f64 {
    let m = (w.abs() - v).max(0.0);
    if m == 0.0 {
        0.0
    } else {
        m.copysign(w)
    }
}

/// Decoupled soft thresholding with thresholds `1/γ_x`, `1/γ_y`.
pub fn update_d_aniso(cx: &[f64], cy: &[f64], gamma_x: f64, gamma_y: f64) -> (Vec<f64>, Vec<f64>) {
    let (tx, ty) = (1.0 / gamma_x, 1.0 / gamma_y);
    (cx.iter().map(|&c| shrink(c, tx)).collect(), cy.iter().map(|&c| shrink(c, ty)).collect())
}

/// Coupled shrinkage on the pointwise magnitude `s_i = √(c_x,i² + c_y,i²)`.
pub fn update_d_iso(cx: &[f64], cy: &[f64], gamma_x: f64, gamma_y: f64) -> (Vec<f64>, Vec<f64>) {
    let (tx, ty) = (1.0 / gamma_x, 1.0 / gamma_y);
    let mut dx = Vec::with_capacity(cx.len());
    let mut dy = Vec::with_capacity(cy.len());
    for (&a, &b) in cx.iter().zip(cy) {
        let s = a.hypot(b);
        if s == 0.0 {
            dx.push(0.0);
            dy.push(0.0);
        } else {
            dx.push(a / s * (s - tx).max(0.0));
            dy.push(b / s * (s - ty).max(0.0));
        }
    }
    (dx, dy)
}

/// `g' = g + Lx − d` for both directions.
pub fn update_g(
    gx: &[f64],
    gy: &[f64],
    lx: &[f64],
    ly: &[f64],
    dx: &[f64],
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let step = |g: &[f64], l: &[f64], d: &[f64]| g.iter().zip(l).zip(d).map(|((g, l), d)| g + l - d).collect();
    (step(gx, lx, dx), step(gy, ly, dy))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SbConfig {
    pub variant: Variant,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub beta_x: f64,
    /// Ignored by the isotropic variant, which has a single `β = beta_x`.
    pub beta_y: f64,
    pub tau_sb: f64,
    pub l_max: usize,
    pub cgls: CglsConfig,
}

impl SbConfig {
    /// Equal parameters in both directions.
    pub fn new(variant: Variant, lambda: f64, beta: f64) -> Self {
        SbConfig {
            variant,
            lambda_x: lambda,
            lambda_y: lambda,
            beta_x: beta,
            beta_y: beta,
            tau_sb: 1e-3,
            l_max: 50,
            cgls: CglsConfig::default(),
        }
    }

    /// Parameters from `λ` and `γ` via `β = λ²/γ`.
    pub fn from_gamma(variant: Variant, lambda: f64, gamma: f64) -> Self {
        Self::new(variant, lambda, lambda * lambda / gamma)
    }

    /// `γ = λ²/β` per direction.
    pub fn gammas(&self) -> (f64, f64) {
        let by = match self.variant {
            Variant::Aniso => self.beta_y,
            Variant::Iso => self.beta_x,
        };
        (self.lambda_x * self.lambda_x / self.beta_x, self.lambda_y * self.lambda_y / by)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.lambda_x) && pos(self.lambda_y)) {
            return Err(Error::config("λ must be positive"));
        }
        if !pos(self.beta_x) || (self.variant == Variant::Aniso && !pos(self.beta_y)) {
            return Err(Error::config("β must be positive"));
        }
        if !(self.tau_sb >= 0.0) {
            return Err(Error::config("tau_sb must be non-negative"));
        }
        if self.l_max == 0 {
            return Err(Error::config("l_max must be at least 1"));
        }
        self.cgls.validate()
    }
}

/// Iterates of the outer loop and the per-iteration records.
#[derive(Debug, Clone, Serialize)]
pub struct SbState {
    pub x: Vec<f64>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub ell: usize,
    pub rc_history: Vec<f64>,
    pub re_history: Vec<f64>,
    pub isnr_history: Vec<Decibels>,
    /// CGLS iterations `ι_ℓ` of each outer step.
    pub cgls_iters: Vec<usize>,
}

impl SbState {
    /// `x = b`, `d = g = 0`.
    pub fn initial(b: &[f64], p: usize) -> Self {
        SbState {
            x: b.to_vec(),
            dx: vec![0.0; p],
            dy: vec![0.0; p],
            gx: vec![0.0; p],
            gy: vec![0.0; p],
            ell: 0,
            rc_history: Vec::new(),
            re_history: Vec::new(),
            isnr_history: Vec::new(),
            cgls_iters: Vec::new(),
        }
    }

    pub fn iota_total(&self) -> usize {
        self.cgls_iters.iter().sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SbOutcome {
    pub state: SbState,
    /// `RC_SB < τ_SB` was reached before `L_max`.
    pub converged: bool,
}

/// Runs the outer loop on an `n×n` image with forward operator `op`.
pub fn sb_run<O: LinearOperator>(op: &O, b: &[f64], n: usize, cfg: &SbConfig, truth: Option<&[f64]>) -> Result<SbOutcome> {
    cfg.validate()?;
    let diff = DiffOp::new(n)?;
    if op.nrows() != b.len() {
        return Err(Error::dim(format!("data of length {} for an operator with {} rows", b.len(), op.nrows())));
    }
    if op.ncols() != n * n {
        return Err(Error::dim(format!("operator has {} columns for a {n}x{n} image", op.ncols())));
    }
    if op.nrows() != op.ncols() {
        return Err(Error::dim("the initial iterate x = b needs a square forward operator"));
    }
    if let Some(t) = truth {
        if t.len() != n * n {
            return Err(Error::dim(format!("truth of length {} for {} pixels", t.len(), n * n)));
        }
    }
    let aug = AugmentedOp::new(op, diff, cfg.lambda_x, cfg.lambda_y)?;
    let (gamma_x, gamma_y) = cfg.gammas();
    let mut st = SbState::initial(b, diff.p());
    let mut converged = false;

    while st.ell < cfg.l_max {
        let bhat = aug_rhs(b, &st.dx, &st.dy, &st.gx, &st.gy, cfg.lambda_x, cfg.lambda_y)?;
        let sol = cgls_solve(&aug, &bhat, &cfg.cgls, Some(&st.x))?;
        let x_new = sol.x;
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: format!("SB iterate {}", st.ell + 1) });
        }
        let lx = diff.diff_x(&x_new)?;
        let ly = diff.diff_y(&x_new)?;
        let cx: Vec<f64> = lx.iter().zip(&st.gx).map(|(l, g)| l + g).collect();
        let cy: Vec<f64> = ly.iter().zip(&st.gy).map(|(l, g)| l + g).collect();
        let (dx, dy) = match cfg.variant {
            Variant::Aniso => update_d_aniso(&cx, &cy, gamma_x, gamma_y),
            Variant::Iso => update_d_iso(&cx, &cy, gamma_x, gamma_y),
        };
        let (gx, gy) = update_g(&st.gx, &st.gy, &lx, &ly, &dx, &dy);
        let change = rc(&x_new, &st.x)?;

        st.x = x_new;
        st.dx = dx;
        st.dy = dy;
        st.gx = gx;
        st.gy = gy;
        st.ell += 1;
        st.cgls_iters.push(sol.iters);
        st.rc_history.push(change);
        if let Some(t) = truth {
            st.re_history.push(re(&st.x, t)?);
            st.isnr_history.push(isnr(&st.x, b, t)?);
        }
        if change < cfg.tau_sb {
            converged = true;
            break;
        }
    }
    Ok(SbOutcome { state: st, converged })
}

/// `count` points spaced evenly in `log₁₀` between `lo` and `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > 0.0) {
        return Err(Error::config("log-spaced grid needs positive endpoints"));
    }
    match count {
        0 => Err(Error::config("grid needs at least one point")),
        1 => Ok(vec![lo]),
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            let step = (b - a) / (count - 1) as f64;
            Ok((0..count)
                .map(|i| match i {
                    0 => lo,
                    i if i == count - 1 => hi,
                    i => 10f64.powf(a + step * i as f64),
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub beta: f64,
    pub re: Option<f64>,
    pub isnr: Option<Decibels>,
    pub l_end: usize,
    pub iota_total: usize,
    pub converged: bool,
    /// `RC_SB` never increased along the run.
    pub rc_monotone: bool,
}

/// One SB run per `λ` with `β = λ²/γ`; the rest of `base` is kept.
pub fn sweep<O: LinearOperator>(
    op: &O,
    b: &[f64],
    n: usize,
    base: &SbConfig,
    gamma: f64,
    lambdas: &[f64],
    truth: Option<&[f64]>,
) -> Result<Vec<SweepRow>> {
    if !(gamma > 0.0) {
        return Err(Error::config("γ must be positive"));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let beta = lambda * lambda / gamma;
            let cfg = SbConfig { lambda_x: lambda, lambda_y: lambda, beta_x: beta, beta_y: beta, ..base.clone() };
            let out = sb_run(op, b, n, &cfg, truth)?;
            let st = &out.state;
            Ok(SweepRow {
                lambda,
                beta,
                re: st.re_history.last().copied(),
                isnr: st.isnr_history.last().copied(),
                l_end: st.ell,
                iota_total: st.iota_total(),
                converged: out.converged,
                rc_monotone: st.rc_history.windows(2).all(|w| w[1] <= w[0]),
            })
        })
        .collect()
}

/// Row with the smallest final RE when the truth was known, otherwise the
/// first row whose `RC_SB` decreased monotonically.
pub fn select_best(rows: &[SweepRow]) -> Option<usize> {
    if rows.iter().all(|r| r.re.is_some()) && !rows.is_empty() {
        return rows
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.re.unwrap().total_cmp(&b.1.re.unwrap()))
            .map(|(i, _)| i);
    }
    rows.iter().position(|r| r.rc_monotone)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorla::{DenseOperator, Mat};

    #[test]
    fn shrink_examples() {
        assert_eq!(shrink(3.0, 1.0), 2.0);
        assert_eq!(shrink(-3.0, 1.0), -2.0);
        assert_eq!(shrink(0.5, 1.0), 0.0);
        assert_eq!(shrink(-0.5, 1.0), 0.0);
        assert_eq!(shrink(1.5, 0.0), 1.5);
    }

    #[test]
    fn aniso_examples() {
        let (dx, dy) = update_d_aniso(&[3.0, -0.1], &[0.0, 0.0], 1.0, 1.0);
        assert_eq!(dx, vec![2.0, 0.0]);
        assert_eq!(dy, vec![0.0, 0.0]);
        let (dx, _) = update_d_aniso(&[3.0, -0.1], &[0.0, 0.0], f64::INFINITY, 1.0);
        assert_eq!(dx, vec![3.0, -0.1]);
    }

    #[test]
    fn iso_examples() {
        let (dx, dy) = update_d_iso(&[3.0], &[4.0], 1.0, 1.0);
        assert!((dx[0] - 2.4).abs() < 1e-15 && (dy[0] - 3.2).abs() < 1e-15);
        let (dx, dy) = update_d_iso(&[0.3, 0.0], &[0.4, 0.0], 1.0, 1.0);
        assert_eq!((dx, dy), (vec![0.0, 0.0], vec![0.0, 0.0]));
        let c = [2.5, -0.3, -4.0];
        let (dx, dy) = update_d_iso(&c, &[0.0; 3], 0.5, 0.5);
        assert_eq!(dx, update_d_aniso(&c, &[0.0; 3], 0.5, 0.5).0);
        assert_eq!(dy, vec![0.0; 3]);
    }

    #[test]
    fn g_update_fixed_point() {
        let l = [1.0, -2.0];
        let (gx, gy) = update_g(&[0.0; 2], &[0.0; 2], &l, &l, &l, &l);
        assert_eq!((gx, gy), (vec![0.0; 2], vec![0.0; 2]));
        let g = [0.5, 0.25];
        let (gx, _) = update_g(&g, &g, &[0.0; 2], &[0.0; 2], &[0.0; 2], &[0.0; 2]);
        assert_eq!(gx, g.to_vec());
    }

    #[test]
    fn identity_operator_recovers_data() {
        let n = 6;
        let op = DenseOperator::new(Mat::identity(n * n));
        let b: Vec<f64> = (0..n * n).map(|i| ((i % 7) as f64) / 7.0 + 0.1).collect();
        for variant in [Variant::Aniso, Variant::Iso] {
            let mut cfg = SbConfig { tau_sb: 1e-10, l_max: 50, ..SbConfig::new(variant, 1e-4, 1e-8) };
            cfg.cgls.tau_cgls = 1e-12;
            let out = sb_run(&op, &b, n, &cfg, Some(&b)).unwrap();
            let re = *out.state.re_history.last().unwrap();
            assert!(re < 1e-6, "{variant:?}: {re}");
        }
    }

    #[test]
    fn gammas_and_validation() {
        let cfg = SbConfig::from_gamma(Variant::Aniso, 0.1, 2.0);
        assert!((cfg.beta_x - 0.005).abs() < 1e-18);
        let (gx, gy) = cfg.gammas();
        assert!((gx - 2.0).abs() < 1e-12 && (gy - 2.0).abs() < 1e-12);
        assert!(SbConfig::new(Variant::Iso, -1.0, 1.0).validate().is_err());
        assert!(SbConfig { l_max: 0, ..SbConfig::new(Variant::Iso, 1.0, 1.0) }.validate().is_err());
    }

    #[test]
    fn logspace_endpoints() {
        let g = logspace(1e-2, 10.0, 100).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!((g[0], g[99]), (1e-2, 10.0));
        let r = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - r).abs() < 1e-12);
        }
        assert!(logspace(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn best_row_selection() {
        let row = |re: Option<f64>, mono: bool| SweepRow {
            lambda: 1.0,
            beta: 1.0,
            re,
            isnr: None,
            l_end: 1,
            iota_total: 1,
            converged: true,
            rc_monotone: mono,
        };
        assert_eq!(select_best(&[row(Some(0.3), false), row(Some(0.1), false), row(Some(0.2), true)]), Some(1));
        assert_eq!(select_best(&[row(None, false), row(None, true), row(None, true)]), Some(1));
        assert_eq!(select_best(&[]), None);
    }
}
