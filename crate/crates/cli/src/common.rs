//! Helpers shared by the subcommands.

use std::path::{Path, PathBuf};

use kronsb::blurmodel::{build_blur_matrix, synth_speckle_psf, BoundaryCondition, Psf};
use kronsb::io::{read_mtx_f64, read_pgm, write_mtx, write_pgm, PgmDepth};
use kronsb::kronop::{KronMeta, KroneckerSum};
use kronsb::metrics::FlopCounts;
use kronsb::tensorla::{DenseOperator, LinearOperator, Mat};
use kronsb::ErrorClass;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::settings::Settings;

/// Reads a `.pgm` image, or a matrix file for anything else.
pub fn read_image(path: &Path) -> CliResult<Mat<f64>> {
    let is_pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    at(path, if is_pgm { read_pgm(path) } else { read_mtx_f64(path) })
}

/// Prefixes I/O and format failures with the offending path.
pub fn at<T>(path: impl AsRef<Path>, r: kronsb::Result<T>) -> CliResult<T> {
    r.map_err(|e| match e.class() {
        ErrorClass::Io => CliError::Io(format!("{}: {e}", path.as_ref().display())),
        _ => e.into(),
    })
}

/// Writes `<stem>.mtx` (exact) and `<stem>.pgm` (clamped preview).
pub fn write_image(dir: &Path, stem: &str, img: &Mat<f64>) -> CliResult<PathBuf> {
    let path = dir.join(format!("{stem}.mtx"));
    write_mtx(&path, img)?;
    write_pgm(dir.join(format!("{stem}.pgm")), img, PgmDepth::Sixteen)?;
    Ok(path)
}

pub fn square_side(img: &Mat<f64>, what: &str) -> CliResult<usize> {
    let (r, c) = img.shape();
    if r != c {
        return Err(CliError::Usage(format!("{what} must be square, got {r}x{c}")));
    }
    Ok(r)
}

pub fn parse<T: std::str::FromStr>(s: &str, key: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| CliError::Usage(format!("bad value `{s}` for `{key}`: {e}")))
}

fn parse_center(s: &str) -> CliResult<(usize, usize)> {
    let (r, c) = s
        .split_once(',')
        .ok_or_else(|| CliError::Usage(format!("psf_center `{s}` must look like `row,col`")))?;
    Ok((parse(r.trim(), "psf_center")?, parse(c.trim(), "psf_center")?))
}

/// PSF from the `psf` key: `speckle` (synthetic), `delta`, or a matrix file.
/// File kernels are centered at `psf_center`, default `(rows/2, cols/2)`.
pub fn load_psf(s: &Settings) -> CliResult<Psf> {
    let spec = s.str("psf").unwrap_or("speckle");
    let size: usize = s.get("psf_size")?;
    match spec {
        "speckle" => Ok(synth_speckle_psf(size, s.get("roughness")?, s.get("psf_seed")?)?),
        "delta" => Ok(Psf::delta(size)?),
        path => {
            let k = at(path, read_mtx_f64(path))?;
            let center = match s.str("psf_center") {
                Some(c) => parse_center(c)?,
                None => (k.rows() / 2, k.cols() / 2),
            };
            Ok(Psf::with_center(k, center)?)
        }
    }
}

pub fn boundary(s: &Settings) -> CliResult<BoundaryCondition> {
    s.get("bc")
}

/// Forward model for deblurring.
pub enum Forward {
    Kron(KroneckerSum, KronMeta),
    Dense(DenseOperator),
}

impl Forward {
    /// From `operator` (saved Kronecker sum), `matrix` (dense `A`) or `psf`,
    /// checked against an `n×n` image.
    pub fn from_settings(s: &Settings, n: usize) -> CliResult<Self> {
        let chosen = ["operator", "matrix", "psf"].iter().filter(|k| s.is_set(k)).count();
        if chosen != 1 {
            return Err(CliError::Usage("set exactly one of `operator`, `matrix` or `psf`".into()));
        }
        let fwd = if let Some(dir) = s.str("operator") {
            let (op, meta) = at(dir, KroneckerSum::load(dir))?;
            Forward::Kron(op, meta)
        } else if let Some(path) = s.str("matrix") {
            Forward::Dense(DenseOperator::new(at(path, read_mtx_f64(path))?))
        } else {
            Forward::Dense(DenseOperator::new(build_blur_matrix(&load_psf(s)?, n, boundary(s)?)?))
        };
        if fwd.nrows() != n * n || fwd.ncols() != n * n {
            return Err(CliError::Usage(format!(
                "operator is {}x{} but the image has {} pixels",
                fwd.nrows(),
                fwd.ncols(),
                n * n
            )));
        }
        Ok(fwd)
    }

    pub fn flops(&self) -> FlopCounts {
        match self {
            Forward::Kron(op, _) => op.flops().snapshot(),
            Forward::Dense(op) => op.flops().snapshot(),
        }
    }

    pub fn describe(&self) -> Value {
        match self {
            Forward::Kron(op, meta) => serde_json::json!({
                "kind": "kronecker_sum",
                "k": op.k(),
                "k_p": meta.k_p,
                "engine": meta.engine,
            }),
            Forward::Dense(_) => serde_json::json!({ "kind": "dense" }),
        }
    }
}

impl LinearOperator for Forward {
    fn nrows(&self) -> usize {
        match self {
            Forward::Kron(op, _) => op.nrows(),
            Forward::Dense(op) => op.nrows(),
        }
    }
    fn ncols(&self) -> usize {
        match self {
            Forward::Kron(op, _) => op.ncols(),
            Forward::Dense(op) => op.ncols(),
        }
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        match self {
            Forward::Kron(op, _) => op.apply_into(x, y),
            Forward::Dense(op) => op.apply_into(x, y),
        }
    }
    fn apply_t_into(&self, y: &[f64], x: &mut [f64]) {
        match self {
            Forward::Kron(op, _) => op.apply_t_into(y, x),
            Forward::Dense(op) => op.apply_t_into(y, x),
        }
    }
}

/// Pretty JSON to `path` (when given) and to stdout.
pub fn emit<T: Serialize>(report: &T, path: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(report)?;
    if let Some(p) = path {
        std::fs::write(p, format!("{text}\n")).map_err(|e| CliError::Io(format!("writing {}: {e}", p.display())))?;
    }
    println!("{text}");
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))
}
