//! Spatially invariant blur: PSFs, dense blur matrices under zero or
//! reflexive boundary conditions, synthetic speckle PSFs, test images and
//! the additive noise model.
//!
//! Images are `n×n` matrices `X` (row `r`, column `c`). The pixel vector is
//! `vec(X)`, so pixel `(r, c)` sits at index `c·n + r`.

use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorla::{array, gaussian_vec, norm2, seeded_rng, svd_small, vec, Mat};

/// Largest image side for which a dense blur matrix is built by default.
pub const DENSE_SIDE_CAP: usize = 200;

/// Kernel matrix rank test used for generated PSFs.
pub const SEPARABILITY_RATIO: f64 = 0.1;

const SPECKLE_RETRIES: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    kernel: Mat<f64>,
    center: (usize, usize),
}

impl Psf {
    /// Odd-sized non-negative kernel, normalized to unit sum, centered at its middle entry.
    pub fn new(kernel: Mat<f64>) -> Result<Self> {
        let (r, c) = kernel.shape();
        if r % 2 == 0 || c % 2 == 0 {
            return Err(Error::config(format!("PSF support {r}x{c} must be odd in both directions")));
        }
        Self::with_center(kernel, (r / 2, c / 2))
    }

    /// Kernel with an explicit center, for externally supplied PSFs.
    pub fn with_center(mut kernel: Mat<f64>, center: (usize, usize)) -> Result<Self> {
        let (r, c) = kernel.shape();
        if r == 0 || c == 0 {
            return Err(Error::config("empty PSF"));
        }
        if center.0 >= r || center.1 >= c {
            return Err(Error::config(format!("PSF center {center:?} outside a {r}x{c} kernel")));
        }
        if !kernel.is_finite() {
            return Err(Error::NonFinite { context: "PSF kernel".into() });
        }
        if kernel.data().iter().any(|&v| v < 0.0) {
            return Err(Error::config("PSF entries must be non-negative"));
        }
        let total: f64 = kernel.data().iter().sum();
        if total <= 0.0 {
            return Err(Error::config("PSF must have positive mass"));
        }
        kernel.scale(1.0 / total);
        Ok(Psf { kernel, center })
    }

    /// Single unit entry: the identity blur.
    pub fn delta(size: usize) -> Result<Self> {
        let mut k = Mat::zeros(size, size);
        k.set(size / 2, size / 2, 1.0);
        Self::new(k)
    }

    pub fn kernel(&self) -> &Mat<f64> {
        &self.kernel
    }

    pub fn center(&self) -> (usize, usize) {
        self.center
    }

    /// `σ₂/σ₁` of the kernel matrix; zero for a separable kernel.
    pub fn separability_ratio(&self) -> Result<f64> {
        let s = svd_small(&self.kernel)?;
        Ok(if s.sigma.len() < 2 || s.sigma[0] == 0.0 { 0.0 } else { s.sigma[1] / s.sigma[0] })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Zero,
    Reflexive,
}

impl FromStr for BoundaryCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(BoundaryCondition::Zero),
            "reflexive" => Ok(BoundaryCondition::Reflexive),
            other => Err(Error::config(format!("unknown boundary condition `{other}`"))),
        }
    }
}

/// Maps a possibly out-of-range index onto the image, or `None` for a zero pixel.
#[inline]
fn source_index(i: isize, n: usize, bc: BoundaryCondition) -> Option<usize> {
    let n = n as isize;
    if (0..n).contains(&i) {
        return Some(i as usize);
    }
    match bc {
        BoundaryCondition::Zero => None,
        BoundaryCondition::Reflexive => {
            let j = if i < 0 { -i - 1 } else { 2 * n - i - 1 };
            Some(j.clamp(0, n - 1) as usize)
        }
    }
}

fn check_fits(psf: &Psf, n: usize) -> Result<()> {
    let (kr, kc) = psf.kernel.shape();
    if n == 0 {
        return Err(Error::config("image side must be positive"));
    }
    if kr > n || kc > n {
        return Err(Error::config(format!("PSF {kr}x{kc} is larger than the {n}x{n} image")));
    }
    Ok(())
}

/// Dense `n²×n²` blur matrix with the default side cap.
pub fn build_blur_matrix(psf: &Psf, n: usize, bc: BoundaryCondition) -> Result<Mat<f64>> {
    build_blur_matrix_with_cap(psf, n, bc, DENSE_SIDE_CAP)
}

/// Dense blur matrix: `b(r,c) = Σ P[i,j]·x(r − (i − cᵣ), c − (j − c_c))`.
pub fn build_blur_matrix_with_cap(psf: &Psf, n: usize, bc: BoundaryCondition, max_side: usize) -> Result<Mat<f64>> {
    if n > max_side {
        return Err(Error::CapExceeded { requested: n * n, cap: max_side * max_side });
    }
    check_fits(psf, n)?;
    let big = n * n;
    let mut a = Mat::zeros(big, big);
    let (kr, kc) = psf.kernel.shape();
    let (cr, cc) = (psf.center.0 as isize, psf.center.1 as isize);
    for c in 0..n {
        for r in 0..n {
            let row = a.row_mut(c * n + r);
            for i in 0..kr {
                let Some(sr) = source_index(r as isize - i as isize + cr, n, bc) else { continue };
                for j in 0..kc {
                    let Some(sc) = source_index(c as isize - j as isize + cc, n, bc) else { continue };
                    row[sc * n + sr] += psf.kernel.get(i, j);
                }
            }
        }
    }
    Ok(a)
}

/// Direct 2-D convolution of an `n×n` image, without forming the matrix.
pub fn blur_image(psf: &Psf, img: &Mat<f64>, bc: BoundaryCondition) -> Result<Mat<f64>> {
    let (n, w) = img.shape();
    if n != w {
        return Err(Error::dim(format!("image {n}x{w} is not square")));
    }
    check_fits(psf, n)?;
    let (kr, kc) = psf.kernel.shape();
    let (cr, cc) = (psf.center.0 as isize, psf.center.1 as isize);
    Ok(Mat::from_fn(n, n, |r, c| {
        let mut acc = 0.0;
        for i in 0..kr {
            let Some(sr) = source_index(r as isize - i as isize + cr, n, bc) else { continue };
            for j in 0..kc {
                let Some(sc) = source_index(c as isize - j as isize + cc, n, bc) else { continue };
                acc += psf.kernel.get(i, j) * img.get(sr, sc);
            }
        }
        acc
    }))
}

/// Random non-separable speckle-like kernel: a few rotated anisotropic
/// Gaussian blobs, modulated by multiplicative roughness. Candidates whose
/// kernel has `σ₂/σ₁ ≤ 0.1` are redrawn.
pub fn synth_speckle_psf(size: usize, roughness: f64, seed: u64) -> Result<Psf> {
    if size.is_multiple_of(2) || size < 3 {
        return Err(Error::config(format!("speckle PSF size {size} must be odd and at least 3")));
    }
    if !(roughness >= 0.0) {
        return Err(Error::config("roughness must be non-negative"));
    }
    let mut rng = seeded_rng(seed);
    let mid = (size / 2) as f64;
    let spread = size as f64 / 4.0;
    for _ in 0..SPECKLE_RETRIES {
        let mut k = Mat::zeros(size, size);
        let blobs = rng.random_range(3..=5);
        for _ in 0..blobs {
            let y0 = mid + rng.random_range(-spread..=spread);
            let x0 = mid + rng.random_range(-spread..=spread);
            let sy = rng.random_range(0.5..=0.5 + spread);
            let sx = rng.random_range(0.5..=0.5 + spread);
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let w = rng.random_range(0.3..=1.0);
            let (st, ct) = theta.sin_cos();
            for i in 0..size {
                for j in 0..size {
                    let (dy, dx) = (i as f64 - y0, j as f64 - x0);
                    let u = ct * dx + st * dy;
                    let v = -st * dx + ct * dy;
                    let e = (-0.5 * (u * u / (sx * sx) + v * v / (sy * sy))).exp();
                    k.set(i, j, k.get(i, j) + w * e);
                }
            }
        }
        for v in k.data_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v *= 1.0 + roughness * z.abs();
        }
        let psf = Psf::new(k)?;
        if psf.separability_ratio()? > SEPARABILITY_RATIO {
            return Ok(psf);
        }
    }
    Err(Error::Generation(format!(
        "no non-separable speckle PSF after {SPECKLE_RETRIES} draws (size {size}, roughness {roughness})"
    )))
}

/// Piecewise-constant test image with values in `[0, 1]`: a bright block,
/// a disk, a thin bar and a dim square on a dark background.
pub fn test_pattern(n: usize) -> Mat<f64> {
    let f = n as f64;
    Mat::from_fn(n, n, |r, c| {
        let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
        let mut v: f64 = 0.05;
        if (0.12 * f..0.45 * f).contains(&y) && (0.15 * f..0.40 * f).contains(&x) {
            v = 1.0;
        }
        let (dy, dx) = (y - 0.68 * f, x - 0.30 * f);
        if dy * dy + dx * dx < (0.16 * f) * (0.16 * f) {
            v = 0.7;
        }
        if (0.55 * f..0.90 * f).contains(&x) && (0.20 * f..0.27 * f).contains(&y) {
            v = 0.85;
        }
        if (0.55 * f..0.85 * f).contains(&x) && (0.55 * f..0.85 * f).contains(&y) {
            v = 0.4;
        }
        v
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level: f64,
    pub seed: u64,
}

/// `b = b_true + η` with `η = level·(‖b_true‖/‖ζ‖)·ζ`, `ζ` standard normal.
pub fn add_noise(b_true: &[f64], spec: &NoiseSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(spec.level >= 0.0) || !spec.level.is_finite() {
        return Err(Error::config("noise level must be a non-negative number"));
    }
    if spec.level == 0.0 {
        return Ok((b_true.to_vec(), vec![0.0; b_true.len()]));
    }
    let nb = norm2(b_true);
    if nb == 0.0 {
        return Err(Error::Undefined("noise scaling of a zero signal".into()));
    }
    let mut rng = seeded_rng(spec.seed);
    let zeta: Vec<f64> = gaussian_vec(b_true.len(), &mut rng);
    let nz = norm2(&zeta);
    let s = spec.level * nb / nz;
    let eta: Vec<f64> = zeta.iter().map(|z| s * z).collect();
    let b = b_true.iter().zip(&eta).map(|(t, e)| t + e).collect();
    Ok((b, eta))
}

/// PSF, boundary condition, image side and noise model of one experiment.
#[derive(Debug, Clone)]
pub struct BlurProblem {
    pub psf: Psf,
    pub bc: BoundaryCondition,
    pub n: usize,
    pub noise: NoiseSpec,
}

/// Output of [`BlurProblem::observe`]; all vectors in `vec` ordering.
#[derive(Debug, Clone)]
pub struct Observation {
    pub b_true: Vec<f64>,
    pub b: Vec<f64>,
    pub eta: Vec<f64>,
}

impl BlurProblem {
    pub fn matrix(&self) -> Result<Mat<f64>> {
        build_blur_matrix(&self.psf, self.n, self.bc)
    }

    pub fn observe(&self, x_true: &Mat<f64>) -> Result<Observation> {
        if x_true.shape() != (self.n, self.n) {
            return Err(Error::dim(format!("image {:?} for a problem of side {}", x_true.shape(), self.n)));
        }
        let b_true = vec(&blur_image(&self.psf, x_true, self.bc)?);
        let (b, eta) = add_noise(&b_true, &self.noise)?;
        Ok(Observation { b_true, b, eta })
    }
}

/// Reshapes a pixel vector back into an `n×n` image.
pub fn to_image(x: &[f64], n: usize) -> Result<Mat<f64>> {
    array(x, n, n)
}
