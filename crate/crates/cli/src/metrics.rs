//! `metrics`: image-quality measures for existing files, and the cost model.

use std::path::PathBuf;

use kronsb::metrics::{isnr, predict_speedups, re, snr, CostModel, EngineKind};
use kronsb::tensorla::vec;
use serde_json::json;

use crate::common::{emit, read_image};
use crate::error::{CliError, CliResult};
use crate::settings::settings_args;

settings_args! {
    MetricsArgs {
        /// Restored image.
        x: PathBuf = None,
        truth: PathBuf = None,
        /// Observed image, for ISNR.
        b: PathBuf = None,
        /// Noise-free blurred image, for the SNR of `b`.
        b_true: PathBuf = None,
        /// Image side for the cost model.
        n: usize = None,
        k: usize = None,
        k_p: usize = None,
        iota_total: usize = None,
        engine: String = Some("egkb"),
    }
}

fn load(p: Option<PathBuf>) -> CliResult<Option<Vec<f64>>> {
    p.map(|p| read_image(&p).map(|m| vec(&m))).transpose()
}

pub fn run(args: &MetricsArgs) -> CliResult<()> {
    let s = args.settings()?;
    let x = load(s.opt("x")?)?;
    let truth = load(s.opt("truth")?)?;
    let b = load(s.opt("b")?)?;
    let b_true = load(s.opt("b_true")?)?;

    let re_v = match (&x, &truth) {
        (Some(x), Some(t)) => Some(re(x, t)?),
        _ => None,
    };
    let isnr_v = match (&x, &b, &truth) {
        (Some(x), Some(b), Some(t)) => Some(isnr(x, b, t)?),
        _ => None,
    };
    let snr_v = match (&b_true, &b) {
        (Some(bt), Some(b)) => Some(snr(bt, b)?),
        _ => None,
    };
    let cost = [s.opt::<usize>("n")?, s.opt("k")?, s.opt("iota_total")?];
    let predicted = match cost {
        [Some(n), Some(k), Some(iota)] => {
            let k_p = s.opt::<usize>("k_p")?.unwrap_or(k);
            let engine: EngineKind = s.get("engine")?;
            Some(predict_speedups(&CostModel::square(n, k, k_p, engine, iota))?)
        }
        [None, None, None] => None,
        _ => return Err(CliError::Usage("the cost model needs all of n, k and iota_total".into())),
    };
    if re_v.is_none() && snr_v.is_none() && predicted.is_none() {
        return Err(CliError::Usage(
            "nothing to compute: give x and truth, b and b_true, or n, k and iota_total".into(),
        ));
    }
    let report = json!({
        "command": "metrics",
        "config": s.echo(),
        "re": re_v,
        "isnr_db": isnr_v,
        "snr_db": snr_v,
        "predicted": predicted,
    });
    emit(&report, None)
}
