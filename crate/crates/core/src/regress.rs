//! Ordinary least squares with classical (homoskedastic) inference.
//!
//! Fits go through a Householder QR of the design so that near-collinear
//! problems do not lose precision squaring the condition number.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::stats::student_t_two_sided_p;

/// A column whose QR pivot falls below this fraction of its own norm is
/// treated as linearly dependent on the preceding columns.
const RANK_TOL: f64 = 1e-10;

/// Result of any linear fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    /// Intercept first (when present), then one entry per included column.
    pub coefficients: Array1<f64>,
    pub intercept: bool,
    /// Columns of the caller's design matrix used by this fit, in order.
    pub included_columns: Vec<usize>,
    pub residuals: Array1<f64>,
    pub fitted: Array1<f64>,
    /// `sqrt(RSS / (n - k))`, or 0 when there are no residual degrees of freedom.
    pub residual_std: f64,
    pub n_obs: usize,
    pub n_params: usize,
    /// Diagonal of `(X'X)^{-1}` aligned with `coefficients`.
    pub xtx_inv_diag: Array1<f64>,
}

impl LinearFit {
    pub fn intercept_value(&self) -> f64 {
        if self.intercept {
            self.coefficients[0]
        } else {
            0.0
        }
    }

    /// Slopes aligned with `included_columns`.
    pub fn slopes(&self) -> ArrayView1<'_, f64> {
        let off = usize::from(self.intercept);
        self.coefficients.slice(ndarray::s![off..])
    }

    /// Position in `coefficients` of a design column, if it was included.
    pub fn coefficient_index(&self, column: usize) -> Option<usize> {
        self.included_columns
            .iter()
            .position(|&c| c == column)
            .map(|i| i + usize::from(self.intercept))
    }

    /// Predict rows of a design matrix laid out like the one used to fit.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let mut out = Array1::from_elem(x.nrows(), self.intercept_value());
        for (&col, &b) in self.included_columns.iter().zip(self.slopes()) {
            out.scaled_add(b, &x.column(col));
        }
        out
    }

    pub fn residual_dof(&self) -> usize {
        self.n_obs - self.n_params
    }

    pub fn rss(&self) -> f64 {
        self.residuals.dot(&self.residuals)
    }
}

/// Significance test for one coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientTest {
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub rejected_at_5pct: bool,
}

impl CoefficientTest {
    pub const LEVEL: f64 = 0.05;

    pub fn from_parts(estimate: f64, std_error: f64, dof: f64) -> Self {
        let t_stat = estimate / std_error;
        let p_value = student_t_two_sided_p(t_stat, dof);
        Self {
            estimate,
            std_error,
            t_stat,
            p_value,
            rejected_at_5pct: p_value < Self::LEVEL,
        }
    }
}

/// Thin Householder QR: `R` (k×k upper) and `Qᵀy` (first k entries).
struct Qr {
    r: Array2<f64>,
    qty: Array1<f64>,
}

fn householder_qr(a: &Array2<f64>, y: ArrayView1<'_, f64>) -> Result<Qr> {
    let (n, k) = a.dim();
    let mut a = a.clone();
    let mut y = y.to_owned();
    let col_norms: Vec<f64> = a.axis_iter(Axis(1)).map(|c| c.dot(&c).sqrt()).collect();
    for j in 0..k {
        let mut norm = 0.0;
        for i in j..n {
            norm += a[[i, j]] * a[[i, j]];
        }
        let norm = norm.sqrt();
        if col_norms[j] == 0.0 || norm <= RANK_TOL * col_norms[j] {
            return Err(Error::RankDeficient { rank: j, columns: k });
        }
        let alpha = if a[[j, j]] > 0.0 { -norm } else { norm };
        // v = a[j.., j] - alpha e_1
        let mut v: Vec<f64> = (j..n).map(|i| a[[i, j]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in j..k {
                let dot: f64 = v.iter().enumerate().map(|(t, vt)| vt * a[[j + t, c]]).sum();
                let f = 2.0 * dot / vnorm2;
                for (t, vt) in v.iter().enumerate() {
                    a[[j + t, c]] -= f * vt;
                }
            }
            let dot: f64 = v.iter().enumerate().map(|(t, vt)| vt * y[j + t]).sum();
            let f = 2.0 * dot / vnorm2;
            for (t, vt) in v.iter().enumerate() {
                y[j + t] -= f * vt;
            }
        }
    }
    let mut r = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for c in i..k {
            r[[i, c]] = a[[i, c]];
        }
    }
    Ok(Qr {
        r,
        qty: y.slice(ndarray::s![..k]).to_owned(),
    })
}

fn back_substitute(r: &Array2<f64>, rhs: ArrayView1<'_, f64>) -> Array1<f64> {
    let k = r.nrows();
    let mut x = Array1::<f64>::zeros(k);
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for c in (i + 1)..k {
            s -= r[[i, c]] * x[c];
        }
        x[i] = s / r[[i, i]];
    }
    x
}

/// Diagonal of `(RᵀR)^{-1} = R^{-1} R^{-T}`.
fn inverse_gram_diag(r: &Array2<f64>) -> Array1<f64> {
    let k = r.nrows();
    let mut rinv = Array2::<f64>::zeros((k, k));
    for col in 0..k {
        let mut e = Array1::<f64>::zeros(k);
        e[col] = 1.0;
        rinv.column_mut(col).assign(&back_substitute(r, e.view()));
    }
    rinv.axis_iter(Axis(0)).map(|row| row.dot(&row)).collect()
}

/// OLS of `y` on all columns of `x`, optionally with a prepended constant.
pub fn ols_fit(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, intercept: bool) -> Result<LinearFit> {
    let cols: Vec<usize> = (0..x.ncols()).collect();
    ols_fit_columns(x, &cols, y, intercept)
}

/// OLS of `y` on the listed columns of `x`. An empty column list with an
/// intercept gives the mean-only fit; with neither, the zero fit.
pub fn ols_fit_columns(
    x: ArrayView2<'_, f64>,
    columns: &[usize],
    y: ArrayView1<'_, f64>,
    intercept: bool,
) -> Result<LinearFit> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    let off = usize::from(intercept);
    let k = columns.len() + off;
    if n <= k {
        return Err(Error::TooFewObservations { n_obs: n, n_params: k });
    }

    let (coefficients, xtx_inv_diag, design) = if k == 0 {
        (Array1::zeros(0), Array1::zeros(0), Array2::zeros((n, 0)))
    } else {
        let mut design = Array2::<f64>::zeros((n, k));
        if intercept {
            design.column_mut(0).fill(1.0);
        }
        for (slot, &c) in columns.iter().enumerate() {
            design.column_mut(slot + off).assign(&x.column(c));
        }
        let qr = householder_qr(&design, y)?;
        let coef = back_substitute(&qr.r, qr.qty.view());
        let diag = inverse_gram_diag(&qr.r);
        (coef, diag, design)
    };

    let fitted = design.dot(&coefficients);
    let residuals = &y - &fitted;
    let dof = n - k;
    let residual_std = (residuals.dot(&residuals) / dof as f64).sqrt();
    Ok(LinearFit {
        coefficients,
        intercept,
        included_columns: columns.to_vec(),
        residuals,
        fitted,
        residual_std,
        n_obs: n,
        n_params: k,
        xtx_inv_diag,
    })
}

/// Classical t-test of `coefficients[index]` against zero with `n - k` dof.
pub fn coefficient_test(fit: &LinearFit, index: usize) -> Result<CoefficientTest> {
    if index >= fit.n_params {
        return Err(Error::InvalidArgument(format!(
            "coefficient index {index} out of range for {} parameters",
            fit.n_params
        )));
    }
    let dof = fit.residual_dof();
    if dof == 0 {
        return Err(Error::TooFewObservations {
            n_obs: fit.n_obs,
            n_params: fit.n_params,
        });
    }
    let estimate = fit.coefficients[index];
    let std_error = fit.residual_std * fit.xtx_inv_diag[index].sqrt();
    if !(std_error > 1e-14 * estimate.abs().max(1.0)) {
        return Err(Error::ZeroVariance { column: index });
    }
    Ok(CoefficientTest::from_parts(estimate, std_error, dof as f64))
}

pub fn rmse(actual: ArrayView1<'_, f64>, predicted: ArrayView1<'_, f64>) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ss: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok((ss / actual.len() as f64).sqrt())
}
