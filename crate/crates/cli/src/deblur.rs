//! `deblur`: split Bregman TV restoration.

use std::path::PathBuf;

use kronsb::cgls::CglsConfig;
use kronsb::metrics::{predict_speedups, snr, CostModel, EngineKind};
use kronsb::splitbregman::{sb_run, SbConfig, Variant};
use kronsb::tensorla::{array, vec};
use serde_json::json;

use crate::common::{emit, ensure_dir, read_image, square_side, write_image, Forward};
use crate::error::{CliError, CliResult};
use crate::settings::{settings_args, Settings};

/// Default `β` for the 7% noise setting.
pub const DEFAULT_BETA: f64 = 0.0066;

settings_args! {
    DeblurArgs {
        /// Observed image (.pgm or matrix file).
        b: PathBuf = None,
        /// Output directory.
        out: PathBuf = None,
        /// True image, enables RE and ISNR.
        truth: PathBuf = None,
        /// Noise-free blurred image, enables the SNR of `b`.
        b_true: PathBuf = None,
        /// Saved Kronecker-sum operator directory.
        operator: PathBuf = None,
        /// Dense blur matrix file.
        matrix: PathBuf = None,
        /// `speckle`, `delta`, or a PSF matrix file (dense operator).
        psf: String = None,
        psf_size: usize = Some("9"),
        roughness: f64 = Some("0.3"),
        psf_seed: u64 = Some("1"),
        psf_center: String = None,
        bc: String = Some("zero"),
        /// `aniso` or `iso`.
        variant: String = Some("aniso"),
        lambda: f64 = Some("0.115"),
        /// Defaults to 0.0066 unless `gamma` is set.
        beta: f64 = None,
        /// Sets `β = λ²/γ`.
        gamma: f64 = None,
        tau_sb: f64 = Some("1e-3"),
        l_max: usize = Some("50"),
        i_max: usize = Some("100"),
        tau_cgls: f64 = Some("1e-4"),
        warm_start: bool = Some("false"),
    }
}

/// Outer-loop settings shared by `deblur` and `sweep`; `beta` is filled in by the caller.
pub fn base_config(s: &Settings) -> CliResult<SbConfig> {
    let variant: Variant = s.get("variant")?;
    let mut cfg = SbConfig::new(variant, 1.0, 1.0);
    cfg.tau_sb = s.get("tau_sb")?;
    cfg.l_max = s.get("l_max")?;
    cfg.cgls = CglsConfig { i_max: s.get("i_max")?, tau_cgls: s.get("tau_cgls")?, warm_start: s.get("warm_start")? };
    Ok(cfg)
}

fn sb_config(s: &Settings) -> CliResult<SbConfig> {
    let lambda: f64 = s.get("lambda")?;
    let beta = match (s.opt::<f64>("beta")?, s.opt::<f64>("gamma")?) {
        (Some(_), Some(_)) => return Err(CliError::Usage("set `beta` or `gamma`, not both".into())),
        (Some(b), None) => b,
        (None, Some(g)) => lambda * lambda / g,
        (None, None) => DEFAULT_BETA,
    };
    let cfg = SbConfig { lambda_x: lambda, lambda_y: lambda, beta_x: beta, beta_y: beta, ..base_config(s)? };
    cfg.validate()?;
    Ok(cfg)
}

/// Side, observation, optional truth and the forward model.
pub type Problem = (usize, Vec<f64>, Option<Vec<f64>>, Forward);

pub fn load_problem(s: &Settings) -> CliResult<Problem> {
    let b_img = read_image(&s.get::<PathBuf>("b")?)?;
    let n = square_side(&b_img, "b")?;
    let truth = match s.opt::<PathBuf>("truth")? {
        Some(p) => {
            let t = read_image(&p)?;
            if t.shape() != (n, n) {
                return Err(CliError::Usage(format!("truth is {:?}, b is {n}x{n}", t.shape())));
            }
            Some(vec(&t))
        }
        None => None,
    };
    let fwd = Forward::from_settings(s, n)?;
    Ok((n, vec(&b_img), truth, fwd))
}

pub fn run(args: &DeblurArgs) -> CliResult<()> {
    let s = args.settings()?;
    let out: PathBuf = s.get("out")?;
    let cfg = sb_config(&s)?;
    let (n, b, truth, fwd) = load_problem(&s)?;
    let snr_db = match s.opt::<PathBuf>("b_true")? {
        Some(p) => Some(snr(&vec(&read_image(&p)?), &b)?),
        None => None,
    };

    let outcome = sb_run(&fwd, &b, n, &cfg, truth.as_deref())?;
    let st = &outcome.state;
    let predicted = match &fwd {
        Forward::Kron(op, meta) => {
            let k_p = meta.k_p.unwrap_or(op.k()).max(op.k());
            let engine = meta.engine.unwrap_or(EngineKind::Egkb);
            Some(predict_speedups(&CostModel::square(n, op.k(), k_p, engine, st.iota_total()))?)
        }
        Forward::Dense(_) => None,
    };

    ensure_dir(&out)?;
    let x_path = write_image(&out, "x", &array(&st.x, n, n)?)?;
    let report = json!({
        "command": "deblur",
        "config": s.echo(),
        "operator": fwd.describe(),
        "snr_db": snr_db,
        "re": st.re_history,
        "isnr_db": st.isnr_history,
        "rc_sb": st.rc_history,
        "cgls_iters": st.cgls_iters,
        "iota_total": st.iota_total(),
        "ell_end": st.ell,
        "converged": outcome.converged,
        "flops": fwd.flops(),
        "predicted": predicted,
        "outputs": { "x": x_path },
    });
    emit(&report, Some(&out.join("metrics.json")))
}
