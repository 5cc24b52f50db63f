//! Conjugate gradients on the normal equations of `min ‖Âx − b̂‖₂`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorla::{axpy, dot, norm2, LinearOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CglsConfig {
    pub i_max: usize,
    pub tau_cgls: f64,
    /// Start from the supplied iterate instead of zero.
    pub warm_start: bool,
}

impl Default for CglsConfig {
    fn default() -> Self {
        CglsConfig { i_max: 100, tau_cgls: 1e-4, warm_start: false }
    }
}

impl CglsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.i_max == 0 {
            return Err(Error::config("i_max must be at least 1"));
        }
        if !(self.tau_cgls >= 0.0) {
            return Err(Error::config("tau_cgls must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CglsStop {
    /// Relative change fell below `τ_CGLS`.
    Converged,
    /// `‖Âᵀr‖ = 0`: the current iterate solves the normal equations.
    Exact,
    /// `Âw = 0` for a nonzero direction.
    ZeroDirection,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct CglsResult {
    pub x: Vec<f64>,
    pub iters: usize,
    /// `RC_CGLS` from the second iteration on.
    pub rc_history: Vec<f64>,
    pub stop: CglsStop,
}

/// Solves from `x⁰ = 0` (or `x0` when warm starting is enabled).
///
/// Iteration `ι` updates `x` and then tests `‖μw‖/‖x^{(ι)}‖ < τ` against
/// the previous iterate; the test is skipped at `ι = 0`, where that
/// iterate is zero.
pub fn cgls_solve<O: LinearOperator>(op: &O, bhat: &[f64], cfg: &CglsConfig, x0: Option<&[f64]>) -> Result<CglsResult> {
    cfg.validate()?;
    if bhat.len() != op.nrows() {
        return Err(Error::dim(format!("right-hand side of length {} for {} rows", bhat.len(), op.nrows())));
    }
    let nc = op.ncols();
    let (mut x, mut r) = match (cfg.warm_start, x0) {
        (true, Some(x0)) => {
            if x0.len() != nc {
                return Err(Error::dim(format!("warm start of length {} for {nc} unknowns", x0.len())));
            }
            let ax = op.apply(x0)?;
            (x0.to_vec(), bhat.iter().zip(&ax).map(|(b, a)| b - a).collect::<Vec<_>>())
        }
        _ => (vec![0.0; nc], bhat.to_vec()),
    };
    let mut f = vec![0.0; nc];
    op.apply_t_into(&r, &mut f);
    let mut w = f.clone();
    let mut tau = dot(&f, &f);
    let mut z = vec![0.0; op.nrows()];
    let mut rc_history = Vec::new();
    let mut iters = 0;

    if tau == 0.0 {
        return Ok(CglsResult { x, iters, rc_history, stop: CglsStop::Exact });
    }
    let mut stop = CglsStop::MaxIterations;
    while iters < cfg.i_max {
        op.apply_into(&w, &mut z);
        let zz = dot(&z, &z);
        if !zz.is_finite() || !tau.is_finite() {
            return Err(Error::NonFinite { context: format!("CGLS iteration {iters}") });
        }
        if zz == 0.0 {
            stop = CglsStop::ZeroDirection;
            break;
        }
        let mu = tau / zz;
        let x_norm_prev = norm2(&x);
        axpy(mu, &w, &mut x);
        axpy(-mu, &z, &mut r);
        op.apply_t_into(&r, &mut f);
        let tau_new = dot(&f, &f);
        iters += 1;
        if tau_new == 0.0 {
            stop = CglsStop::Exact;
            break;
        }
        if iters >= 2 || (cfg.warm_start && x_norm_prev > 0.0) {
            let rc = mu.abs() * norm2(&w) / x_norm_prev;
            rc_history.push(rc);
            if rc < cfg.tau_cgls {
                stop = CglsStop::Converged;
                break;
            }
        }
        let delta = tau_new / tau;
        tau = tau_new;
        for (wi, fi) in w.iter_mut().zip(&f) {
            *wi = fi + delta * *wi;
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "CGLS iterate".into() });
    }
    Ok(CglsResult { x, iters, rc_history, stop })
}
