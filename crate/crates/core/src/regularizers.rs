//! First differences `L = ½[1 −1]` of size `(n−1)×n`, their Kronecker
//! extensions `L⊗I` and `I⊗L`, and the stacked system of the x-update.

use crate::error::{Error, Result};
use crate::tensorla::LinearOperator;

/// `L⊗I` and `I⊗L` acting on `vec` of an `n×n` image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffOp {
    n: usize,
}

impl DiffOp {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::config("difference operator needs an image side of at least 2"));
        }
        Ok(DiffOp { n })
    }

    pub fn side(&self) -> usize {
        self.n
    }

    /// Rows of each difference block, `P = n(n−1)`.
    pub fn p(&self) -> usize {
        self.n * (self.n - 1)
    }

    fn check(&self, len: usize, want: usize) -> Result<()> {
        if len != want {
            return Err(Error::dim(format!("difference operator expects length {want}, got {len}")));
        }
        Ok(())
    }

    /// `(L⊗I)x`: differences between neighbouring image columns.
    pub fn diff_x(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len(), self.n * self.n)?;
        let mut out = vec![0.0; self.p()];
        self.diff_x_into(x, &mut out);
        Ok(out)
    }

    /// `(I⊗L)x`: differences between neighbouring image rows.
    pub fn diff_y(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len(), self.n * self.n)?;
        let mut out = vec![0.0; self.p()];
        self.diff_y_into(x, &mut out);
        Ok(out)
    }

    pub fn diff_x_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check(y.len(), self.p())?;
        let mut out = vec![0.0; self.n * self.n];
        self.diff_x_t_add(1.0, y, &mut out);
        Ok(out)
    }

    pub fn diff_y_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check(y.len(), self.p())?;
        let mut out = vec![0.0; self.n * self.n];
        self.diff_y_t_add(1.0, y, &mut out);
        Ok(out)
    }

    pub(crate) fn diff_x_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for c in 0..n - 1 {
            let (a, b) = (&x[c * n..(c + 1) * n], &x[(c + 1) * n..(c + 2) * n]);
            for (o, (u, v)) in out[c * n..(c + 1) * n].iter_mut().zip(a.iter().zip(b)) {
                *o = 0.5 * (u - v);
            }
        }
    }

    pub(crate) fn diff_y_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for c in 0..n {
            let col = &x[c * n..(c + 1) * n];
            for (r, o) in out[c * (n - 1)..(c + 1) * (n - 1)].iter_mut().enumerate() {
                *o = 0.5 * (col[r] - col[r + 1]);
            }
        }
    }

    /// `out += s·(L⊗I)ᵀ y`.
    pub(crate) fn diff_x_t_add(&self, s: f64, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        let h = 0.5 * s;
        for c in 0..n - 1 {
            for r in 0..n {
                let v = h * y[c * n + r];
                out[c * n + r] += v;
                out[(c + 1) * n + r] -= v;
            }
        }
    }

    /// `out += s·(I⊗L)ᵀ y`.
    pub(crate) fn diff_y_t_add(&self, s: f64, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        let h = 0.5 * s;
        for c in 0..n {
            for r in 0..n - 1 {
                let v = h * y[c * (n - 1) + r];
                out[c * n + r] += v;
                out[c * n + r + 1] -= v;
            }
        }
    }
}

/// `Â = [A; λ_x(L⊗I); λ_y(I⊗L)]` with `T = M + 2P` rows.
#[derive(Debug, Clone)]
pub struct AugmentedOp<O> {
    a_op: O,
    diff: DiffOp,
    lambda_x: f64,
    lambda_y: f64,
}

impl<O: LinearOperator> AugmentedOp<O> {
    pub fn new(a_op: O, diff: DiffOp, lambda_x: f64, lambda_y: f64) -> Result<Self> {
        if a_op.ncols() != diff.side() * diff.side() {
            return Err(Error::dim(format!(
                "forward operator has {} columns, image has {} pixels",
                a_op.ncols(),
                diff.side() * diff.side()
            )));
        }
        if !(lambda_x.is_finite() && lambda_y.is_finite()) {
            return Err(Error::config("λ must be finite"));
        }
        Ok(AugmentedOp { a_op, diff, lambda_x, lambda_y })
    }

    pub fn forward(&self) -> &O {
        &self.a_op
    }

    pub fn diff(&self) -> &DiffOp {
        &self.diff
    }

    pub fn lambdas(&self) -> (f64, f64) {
        (self.lambda_x, self.lambda_y)
    }

    /// Rows of the data block, `M`.
    pub fn m(&self) -> usize {
        self.a_op.nrows()
    }
}

impl<O: LinearOperator> LinearOperator for AugmentedOp<O> {
    fn nrows(&self) -> usize {
        self.a_op.nrows() + 2 * self.diff.p()
    }

    fn ncols(&self) -> usize {
        self.a_op.ncols()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let m = self.a_op.nrows();
        let p = self.diff.p();
        let (ya, rest) = y.split_at_mut(m);
        let (yx, yy) = rest.split_at_mut(p);
        self.a_op.apply_into(x, ya);
        self.diff.diff_x_into(x, yx);
        self.diff.diff_y_into(x, yy);
        yx.iter_mut().for_each(|v| *v *= self.lambda_x);
        yy.iter_mut().for_each(|v| *v *= self.lambda_y);
    }

    fn apply_t_into(&self, y: &[f64], x: &mut [f64]) {
        let m = self.a_op.nrows();
        let p = self.diff.p();
        self.a_op.apply_t_into(&y[..m], x);
        self.diff.diff_x_t_add(self.lambda_x, &y[m..m + p], x);
        self.diff.diff_y_t_add(self.lambda_y, &y[m + p..], x);
    }
}

/// `b̂ = [b; λ_x(d_x − g_x); λ_y(d_y − g_y)]`.
#[allow(clippy::too_many_arguments)]
pub fn aug_rhs(b: &[f64], dx: &[f64], dy: &[f64], gx: &[f64], gy: &[f64], lambda_x: f64, lambda_y: f64) -> Result<Vec<f64>> {
    let p = dx.len();
    if dy.len() != p || gx.len() != p || gy.len() != p {
        return Err(Error::dim("d and g blocks must share one length"));
    }
    let mut out = Vec::with_capacity(b.len() + 2 * p);
    out.extend_from_slice(b);
    out.extend(dx.iter().zip(gx).map(|(d, g)| lambda_x * (d - g)));
    out.extend(dy.iter().zip(gy).map(|(d, g)| lambda_y * (d - g)));
    Ok(out)
}
