//! `simulate`: blur a test image and add Gaussian noise.

use std::path::PathBuf;

use kronsb::blurmodel::{build_blur_matrix, test_pattern, BlurProblem, NoiseSpec};
use kronsb::io::write_mtx;
use kronsb::metrics::snr;
use kronsb::tensorla::array;
use serde_json::json;

use crate::common::{boundary, emit, ensure_dir, load_psf, read_image, square_side, write_image};
use crate::error::CliResult;
use crate::settings::settings_args;

settings_args! {
    SimulateArgs {
        /// Output directory.
        out: PathBuf = None,
        /// `pattern` (synthetic test image) or an image file (.pgm or matrix file).
        image: String = Some("pattern"),
        /// Side of the synthetic pattern.
        n: usize = Some("64"),
        /// `speckle`, `delta`, or a PSF matrix file.
        psf: String = Some("speckle"),
        /// Support of a synthetic PSF (odd).
        psf_size: usize = Some("9"),
        /// Multiplicative roughness of the speckle PSF.
        roughness: f64 = Some("0.3"),
        psf_seed: u64 = Some("1"),
        /// `row,col` center of a PSF read from file.
        psf_center: String = None,
        /// `zero` or `reflexive`.
        bc: String = Some("zero"),
        /// Relative noise level `‖η‖/‖b_true‖`.
        noise: f64 = Some("0.07"),
        /// Noise seed.
        seed: u64 = Some("0"),
        /// Also write the dense blur matrix `A.mtx`.
        emit_matrix: bool = Some("false"),
    }
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let s = args.settings()?;
    let out: PathBuf = s.get("out")?;
    let x_true = match s.str("image").unwrap_or("pattern") {
        "pattern" => test_pattern(s.get("n")?),
        path => read_image(path.as_ref())?,
    };
    let n = square_side(&x_true, "image")?;
    let problem = BlurProblem {
        psf: load_psf(&s)?,
        bc: boundary(&s)?,
        n,
        noise: NoiseSpec { level: s.get("noise")?, seed: s.get("seed")? },
    };
    let obs = problem.observe(&x_true)?;

    ensure_dir(&out)?;
    let x_path = write_image(&out, "x_true", &x_true)?;
    let bt_path = write_image(&out, "b_true", &array(&obs.b_true, n, n)?)?;
    let b_path = write_image(&out, "b", &array(&obs.b, n, n)?)?;
    let psf_path = out.join("psf.mtx");
    write_mtx(&psf_path, problem.psf.kernel())?;
    let matrix_path = if s.get::<bool>("emit_matrix")? {
        let p = out.join("A.mtx");
        write_mtx(&p, &build_blur_matrix(&problem.psf, n, problem.bc)?)?;
        Some(p)
    } else {
        None
    };

    let report = json!({
        "command": "simulate",
        "config": s.echo(),
        "n": n,
        "snr_db": snr(&obs.b_true, &obs.b).ok(),
        "psf": {
            "shape": problem.psf.kernel().shape(),
            "center": problem.psf.center(),
            "separability_ratio": problem.psf.separability_ratio()?,
        },
        "outputs": { "x_true": x_path, "b_true": bt_path, "b": b_path, "psf": psf_path, "matrix": matrix_path },
    });
    emit(&report, Some(&out.join("simulate.json")))
}
