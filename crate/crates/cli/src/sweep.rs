//! `sweep`: split Bregman over a log-spaced `λ` grid with `β = λ²/γ`.

use std::path::PathBuf;

use kronsb::metrics::Decibels;
use kronsb::splitbregman::{logspace, select_best, sweep};
use serde_json::json;

use crate::common::emit;
use crate::deblur::{base_config, load_problem};
use crate::error::CliResult;
use crate::settings::settings_args;

settings_args! {
    SweepArgs {
        /// Observed image (.pgm or matrix file).
        b: PathBuf = None,
        /// CSV output path.
        out: PathBuf = None,
        /// True image, enables RE-based selection.
        truth: PathBuf = None,
        operator: PathBuf = None,
        matrix: PathBuf = None,
        psf: String = None,
        psf_size: usize = Some("9"),
        roughness: f64 = Some("0.3"),
        psf_seed: u64 = Some("1"),
        psf_center: String = None,
        bc: String = Some("zero"),
        variant: String = Some("aniso"),
        lambda_min: f64 = Some("1e-2"),
        lambda_max: f64 = Some("10"),
        /// Number of grid points.
        count: usize = Some("20"),
        gamma: f64 = Some("2"),
        tau_sb: f64 = Some("1e-3"),
        l_max: usize = Some("50"),
        i_max: usize = Some("100"),
        tau_cgls: f64 = Some("1e-4"),
        warm_start: bool = Some("false"),
    }
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn run(args: &SweepArgs) -> CliResult<()> {
    let s = args.settings()?;
    let out: PathBuf = s.get("out")?;
    let base = base_config(&s)?;
    let lambdas = logspace(s.get("lambda_min")?, s.get("lambda_max")?, s.get("count")?)?;
    let (n, b, truth, fwd) = load_problem(&s)?;
    let rows = sweep(&fwd, &b, n, &base, s.get("gamma")?, &lambdas, truth.as_deref())?;

    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(["lambda", "beta", "re", "isnr_db", "ell_end", "iota_total", "converged", "rc_monotone"])?;
    for r in &rows {
        w.write_record([
            r.lambda.to_string(),
            r.beta.to_string(),
            cell(r.re),
            cell(r.isnr.map(Decibels::value)),
            r.l_end.to_string(),
            r.iota_total.to_string(),
            r.converged.to_string(),
            r.rc_monotone.to_string(),
        ])?;
    }
    w.flush()?;

    let best = select_best(&rows);
    let report = json!({
        "command": "sweep",
        "config": s.echo(),
        "rows": rows.len(),
        "best_index": best,
        "best": best.map(|i| &rows[i]),
        "outputs": { "csv": out },
    });
    emit(&report, None)
}
