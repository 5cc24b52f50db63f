//! `approx`: Kronecker-sum approximation of a blur matrix.

use std::path::PathBuf;
use std::time::Instant;

use kronsb::blurmodel::build_blur_matrix;
use kronsb::io::read_mtx_f64;
use kronsb::kronop::{KroneckerSum, MATERIALIZE_CAP};
use kronsb::lowrank::{egkb_seeded, rsvd, EgkbConfig, EgkbTrace, Reorth, RsvdConfig};
use kronsb::metrics::EngineKind;
use kronsb::rearrange::{inverse_rearrange, rearrange, BlockScheme};
use kronsb::tensorla::{Mat, Precision, Scalar};
use serde_json::json;

use crate::common::{at, boundary, emit, ensure_dir, load_psf};
use crate::error::{CliError, CliResult};
use crate::settings::{settings_args, Settings};

settings_args! {
    ApproxArgs {
        /// Output directory for the operator (`meta.json`, `ax_i.mtx`, `ay_i.mtx`).
        out: PathBuf = None,
        /// Dense blur matrix file. Alternative to `psf`.
        matrix: PathBuf = None,
        /// `speckle`, `delta`, or a PSF matrix file; builds `A` for an `n×n` image.
        psf: String = None,
        psf_size: usize = Some("9"),
        roughness: f64 = Some("0.3"),
        psf_seed: u64 = Some("1"),
        psf_center: String = None,
        n: usize = Some("64"),
        bc: String = Some("zero"),
        /// Block sizes; default to the square scheme of the image side.
        m1: usize = None,
        m2: usize = None,
        n1: usize = None,
        n2: usize = None,
        /// `egkb` or `rsvd`.
        engine: String = Some("egkb"),
        /// `single` or `double` for the truncated SVD of R(A).
        precision: String = Some("single"),
        k_max: usize = Some("30"),
        p: usize = Some("2"),
        tau_egkb: f64 = Some("1e-8"),
        k_min: usize = Some("2"),
        /// `one-sided` or `full`; defaults to `full` in single precision.
        reorth: String = None,
        /// RSVD rank; estimated with EGKB when unset.
        k: usize = None,
        /// RSVD power iterations.
        q: usize = Some("1"),
        seed: u64 = Some("0"),
    }
}

struct EngineRun {
    op: KroneckerSum,
    sigma: Vec<f64>,
    k_p: usize,
    rel_err_r: f64,
    trace: Option<EgkbTrace>,
}

fn egkb_config<T: Scalar>(s: &Settings) -> CliResult<EgkbConfig> {
    let mut cfg = EgkbConfig::for_precision::<T>();
    cfg.k_max = s.get("k_max")?;
    cfg.p = s.get("p")?;
    cfg.tau_egkb = s.get("tau_egkb")?;
    cfg.k_min = s.get("k_min")?;
    cfg.seed = s.get("seed")?;
    if let Some(r) = s.opt::<Reorth>("reorth")? {
        cfg.reorth = r;
    }
    Ok(cfg)
}

fn run_engine<T: Scalar>(r: &Mat<f64>, scheme: &BlockScheme, engine: EngineKind, s: &Settings) -> CliResult<EngineRun> {
    let rt: Mat<T> = r.cast();
    let (svd, k_p, trace) = match engine {
        EngineKind::Egkb => {
            let out = egkb_seeded(&rt, &egkb_config::<T>(s)?)?;
            (out.svd, out.trace.k_p, Some(out.trace))
        }
        EngineKind::Rsvd => {
            let (k, trace) = match s.opt::<usize>("k")? {
                Some(k) => (k, None),
                None => {
                    let est = egkb_seeded(&rt, &egkb_config::<T>(s)?)?;
                    (est.trace.chosen_k, Some(est.trace))
                }
            };
            let mut p: usize = s.get("p")?;
            // A breakdown bounds the rank of R(A); oversampling past it cannot succeed.
            if let Some(t) = trace.as_ref().filter(|t| t.breakdown_at.is_some()) {
                p = p.min(t.k_p.saturating_sub(k));
            }
            let cfg = RsvdConfig { k, p, q: s.get("q")?, seed: s.get("seed")? };
            (rsvd(&rt, &cfg)?, k + p, trace)
        }
    };
    drop(rt);
    let rel_err_r = svd.cast::<f64>().relative_residual(r)?;
    Ok(EngineRun {
        op: KroneckerSum::assemble(&svd, scheme)?,
        sigma: svd.sigma.iter().map(|v| v.as_f64()).collect(),
        k_p,
        rel_err_r,
        trace,
    })
}

fn scheme_for(s: &Settings, a: &Mat<f64>) -> CliResult<BlockScheme> {
    let given = ["m1", "m2", "n1", "n2"].map(|k| s.opt::<usize>(k));
    let [m1, m2, n1, n2] = given;
    match (m1?, m2?, n1?, n2?) {
        (Some(m1), Some(m2), Some(n1), Some(n2)) => Ok(BlockScheme::new(m1, m2, n1, n2)?),
        (None, None, None, None) => {
            let side = (a.rows() as f64).sqrt().round() as usize;
            if a.rows() != a.cols() || side * side != a.rows() {
                return Err(CliError::Usage(format!(
                    "{}x{} matrix has no square block scheme; set m1, m2, n1 and n2",
                    a.rows(),
                    a.cols()
                )));
            }
            Ok(BlockScheme::square(side)?)
        }
        _ => Err(CliError::Usage("set all of m1, m2, n1, n2 or none of them".into())),
    }
}

pub fn run(args: &ApproxArgs) -> CliResult<()> {
    let s = args.settings()?;
    let out: PathBuf = s.get("out")?;
    let engine: EngineKind = s.get("engine")?;
    let precision: Precision = s.get("precision")?;

    let t0 = Instant::now();
    let a = match (s.opt::<PathBuf>("matrix")?, s.is_set("psf")) {
        (Some(path), false) => at(&path, read_mtx_f64(&path))?,
        (None, true) => build_blur_matrix(&load_psf(&s)?, s.get("n")?, boundary(&s)?)?,
        _ => return Err(CliError::Usage("set exactly one of `matrix` or `psf`".into())),
    };
    let scheme = scheme_for(&s, &a)?;
    let r = rearrange(&a, &scheme)?;
    // A is not needed again; only R(A) is kept.
    drop(a);
    let t_rearrange = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let run = match precision {
        Precision::Single => run_engine::<f32>(&r, &scheme, engine, &s)?,
        Precision::Double => run_engine::<f64>(&r, &scheme, engine, &s)?,
    };
    let t_engine = t1.elapsed().as_secs_f64();

    // ‖A − Ã_k‖_F from the dense matrices when they fit; A is recovered from R(A).
    let rel_err_a = if scheme.big_m() * scheme.big_n() <= MATERIALIZE_CAP {
        let a = inverse_rearrange(&r, &scheme)?;
        let approx = run.op.materialize()?;
        Some(a.sub(&approx)?.frobenius_norm() / a.frobenius_norm())
    } else {
        None
    };
    drop(r);

    ensure_dir(&out)?;
    run.op.save(&out, Some(engine), Some(run.k_p))?;
    let report = json!({
        "command": "approx",
        "config": s.echo(),
        "scheme": scheme,
        "engine": engine,
        "precision": precision,
        "k": run.op.k(),
        "k_p": run.k_p,
        "sigma": run.sigma,
        "rel_err_r": run.rel_err_r,
        "rel_err_a": rel_err_a,
        "trace": run.trace,
        "seconds": { "rearrange": t_rearrange, "tsvd_and_terms": t_engine },
        "outputs": { "operator": out },
    });
    emit(&report, Some(&out.join("approx.json")))
}
