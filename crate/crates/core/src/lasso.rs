//! Lasso by cyclic coordinate descent, the iterated plug-in penalty, and the
//! post-lasso OLS refit.
//!
//! The objective is `Σ (y_i - x_i'β)² + λ‖β‖₁` with no `1/n` scaling, so a
//! coordinate update soft-thresholds `x_j'r` at `λ/2`. The intercept is
//! never penalized; it is handled by centering before the solve.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::regress::{ols_fit_columns, LinearFit};
use crate::stats::{normal_quantile, population_sd};

/// Default number of regressors behind the starting σ̂.
pub const INITIAL_SIGMA_REGRESSORS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyMethod {
    /// Gaussian-quantile rule with an iterated residual scale.
    PluginIterated,
    /// Use `PenaltyPlan::lambda` as given.
    FixedValue,
    /// K-fold cross-validation picking the minimum-MSE λ.
    CrossValidated { folds: usize },
}

impl PenaltyMethod {
    pub const DEFAULT_CV_FOLDS: usize = 10;
}

/// How the penalty level is chosen, plus solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyPlan {
    pub method: PenaltyMethod,
    /// Penalty level for `FixedValue`; ignored otherwise.
    pub lambda: f64,
    pub plugin_c: f64,
    /// Numerator of `γ = plugin_gamma_numerator / ln(max(p, n))`.
    pub plugin_gamma_numerator: f64,
    pub max_sigma_iterations: usize,
    pub sigma_rel_tol: f64,
    /// Starting σ̂ comes from an OLS fit of y on this many of the most
    /// correlated columns; 0 starts from sd(y).
    pub initial_sigma_regressors: usize,
    /// Convergence threshold on the largest coefficient update in a sweep.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PenaltyPlan {
    fn default() -> Self {
        Self {
            method: PenaltyMethod::PluginIterated,
            lambda: 0.0,
            plugin_c: 1.1,
            plugin_gamma_numerator: 0.1,
            max_sigma_iterations: 5,
            sigma_rel_tol: 1e-4,
            initial_sigma_regressors: INITIAL_SIGMA_REGRESSORS,
            tol: 1e-7,
            max_iter: 10_000,
        }
    }
}

impl PenaltyPlan {
    pub fn fixed(lambda: f64) -> Self {
        Self {
            method: PenaltyMethod::FixedValue,
            lambda,
            ..Self::default()
        }
    }

    pub fn cross_validated(folds: usize) -> Self {
        Self {
            method: PenaltyMethod::CrossValidated { folds },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Validation("lambda must be >= 0".into()));
        }
        if !(self.plugin_c >= 1.0) {
            return Err(Error::Validation("plugin_c must be >= 1".into()));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Validation(
                "solver tolerance and iteration cap must be positive".into(),
            ));
        }
        if let PenaltyMethod::CrossValidated { folds } = self.method {
            if folds < 2 {
                return Err(Error::Validation("cross-validation needs at least 2 folds".into()));
            }
        }
        Ok(())
    }
}

/// Output of the coordinate-descent solver, in the coordinates of the
/// design it was given.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coefficients: Array1<f64>,
    pub support: Vec<usize>,
    pub lambda_used: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest coefficient update in the final sweep.
    pub last_change: f64,
}

impl LassoFit {
    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                last_change: self.last_change,
            })
        }
    }
}

#[inline]
fn soft_threshold(value: f64, threshold: f64) -> f64 {
    if value > threshold {
        value - threshold
    } else if value < -threshold {
        value + threshold
    } else {
        0.0
    }
}

/// Scale every column to unit population standard deviation.
pub fn standardize_columns(x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let mut scaled = x.to_owned();
    let mut scales = Array1::<f64>::zeros(x.ncols());
    for (j, mut col) in scaled.axis_iter_mut(Axis(1)).enumerate() {
        let sd = population_sd(col.iter().copied());
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::ConstantColumn { column: j });
        }
        col.mapv_inplace(|v| v / sd);
        scales[j] = sd;
    }
    Ok((scaled, scales))
}

/// Cyclic coordinate descent from a zero start.
pub fn coordinate_descent(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> LassoFit {
    coordinate_descent_from(x, y, lambda, tol, max_iter, None)
}

/// Cyclic coordinate descent, optionally warm-started.
pub fn coordinate_descent_from(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    init: Option<ArrayView1<'_, f64>>,
) -> LassoFit {
    let penalties = Array1::from_elem(x.ncols(), lambda);
    let mut fit = coordinate_descent_weighted(x, y, penalties.view(), tol, max_iter, init);
    fit.lambda_used = lambda;
    fit
}

/// Coordinate descent on `Σ r_i² + Σ_j λ_j |β_j|`. Columns are visited in
/// order `0..k` every sweep. `lambda_used` is set to the largest `λ_j`.
pub fn coordinate_descent_weighted(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    penalties: ArrayView1<'_, f64>,
    tol: f64,
    max_iter: usize,
    init: Option<ArrayView1<'_, f64>>,
) -> LassoFit {
    let k = x.ncols();
    assert_eq!(penalties.len(), k, "one penalty per column");
    let col_sq: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect();
    let mut beta = match init {
        Some(b) => b.to_owned(),
        None => Array1::<f64>::zeros(k),
    };
    let mut resid = &y - &x.dot(&beta);

    let mut iterations = 0;
    let mut converged = false;
    let mut last_change = 0.0;
    while iterations < max_iter {
        iterations += 1;
        let mut max_change = 0.0f64;
        for j in 0..k {
            if col_sq[j] == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let col = x.column(j);
            let old = beta[j];
            let rho = col.dot(&resid) + col_sq[j] * old;
            let new = soft_threshold(rho, 0.5 * penalties[j]) / col_sq[j];
            let delta = new - old;
            if delta != 0.0 {
                resid.scaled_add(-delta, &col);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        last_change = max_change;
        if max_change < tol {
            converged = true;
            break;
        }
    }

    let support = beta
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect();
    LassoFit {
        coefficients: beta,
        support,
        lambda_used: penalties.iter().copied().fold(0.0, f64::max),
        iterations,
        converged,
        last_change,
    }
}

/// Largest violation of the lasso subgradient conditions at `coefficients`.
///
/// With `g_j = 2 x_j'(y - Xβ)`, optimality requires `g_j = λ·sign(β_j)` on
/// the support and `|g_j| ≤ λ` off it.
pub fn kkt_violation(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    coefficients: ArrayView1<'_, f64>,
    lambda: f64,
) -> f64 {
    let penalties = Array1::from_elem(x.ncols(), lambda);
    kkt_violation_weighted(x, y, coefficients, penalties.view())
}

/// [`kkt_violation`] with per-column penalties.
pub fn kkt_violation_weighted(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    coefficients: ArrayView1<'_, f64>,
    penalties: ArrayView1<'_, f64>,
) -> f64 {
    let resid = &y - &x.dot(&coefficients);
    x.axis_iter(Axis(1))
        .zip(coefficients.iter().zip(penalties.iter()))
        .map(|(col, (&b, &lambda))| {
            let g = 2.0 * col.dot(&resid);
            if b != 0.0 {
                (g - lambda * b.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Lasso objective `Σ r_i² + λ‖β‖₁`.
pub fn objective(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    coefficients: ArrayView1<'_, f64>,
    lambda: f64,
) -> f64 {
    let resid = &y - &x.dot(&coefficients);
    resid.dot(&resid) + lambda * coefficients.iter().map(|b| b.abs()).sum::<f64>()
}

/// Smallest λ at which the all-zero vector is optimal.
pub fn lambda_max(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
    x.axis_iter(Axis(1)).map(|c| 2.0 * c.dot(&y).abs()).fold(0.0, f64::max)
}

/// Design centered (when an intercept is fitted) and scaled to unit sd,
/// with what is needed to map coefficients back.
#[derive(Debug, Clone)]
pub struct StandardizedDesign {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub x_means: Array1<f64>,
    pub scales: Array1<f64>,
    pub y_mean: f64,
    pub intercept: bool,
}

impl StandardizedDesign {
    pub fn new(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, intercept: bool) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.nrows(),
                right: y.len(),
            });
        }
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let (x_means, y_mean, centered_x, centered_y) = if intercept {
            let xm = x.mean_axis(Axis(0)).expect("non-empty");
            let ym = y.sum() / n as f64;
            (xm.clone(), ym, &x - &xm, y.mapv(|v| v - ym))
        } else {
            (Array1::zeros(x.ncols()), 0.0, x.to_owned(), y.to_owned())
        };
        let (scaled, scales) = standardize_columns(centered_x.view())?;
        Ok(Self {
            x: scaled,
            y: centered_y,
            x_means,
            scales,
            y_mean,
            intercept,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// `(intercept, slopes)` on the caller's original scale.
    pub fn original_coefficients(&self, standardized: ArrayView1<'_, f64>) -> (f64, Array1<f64>) {
        let slopes = &standardized / &self.scales;
        let intercept = if self.intercept {
            self.y_mean - slopes.dot(&self.x_means)
        } else {
            0.0
        };
        (intercept, slopes)
    }

    pub fn fit(&self, lambda: f64, plan: &PenaltyPlan) -> LassoFit {
        coordinate_descent(self.x.view(), self.y.view(), lambda, plan.tol, plan.max_iter)
    }

    pub fn fit_weighted(&self, penalties: ArrayView1<'_, f64>, plan: &PenaltyPlan) -> LassoFit {
        coordinate_descent_weighted(self.x.view(), self.y.view(), penalties, plan.tol, plan.max_iter, None)
    }
}

/// Penalty level for a given residual scale:
/// `2·c·σ·√n·Φ⁻¹(1 − γ/(2p))` with `γ = γ₀ / ln(max(p, n))`.
pub fn plugin_lambda_for_sigma(n: usize, p: usize, sigma: f64, plan: &PenaltyPlan) -> f64 {
    let gamma = plan.plugin_gamma_numerator / (n.max(p) as f64).ln();
    let q = normal_quantile(1.0 - gamma / (2.0 * p as f64));
    2.0 * plan.plugin_c * sigma * (n as f64).sqrt() * q
}

#[derive(Debug, Clone, PartialEq)]
pub struct PluginEstimate {
    /// Final per-column penalties.
    pub penalties: Array1<f64>,
    /// λ at `σ̂ = sd(y)`.
    pub initial_lambda: f64,
    pub sigma: f64,
    pub rounds: usize,
}

impl PluginEstimate {
    /// Common penalty level of the penalized columns.
    pub fn lambda(&self) -> f64 {
        self.penalties.iter().copied().fold(0.0, f64::max)
    }
}

fn plugin_penalties(design: &StandardizedDesign, sigma: f64, plan: &PenaltyPlan, unpenalized: &[usize]) -> Array1<f64> {
    let n = design.n_obs();
    let p = design.n_features().saturating_sub(unpenalized.len()).max(1);
    let mut penalties = Array1::from_elem(design.n_features(), plugin_lambda_for_sigma(n, p, sigma, plan));
    for &j in unpenalized {
        penalties[j] = 0.0;
    }
    penalties
}

/// Iterated plug-in penalty on a standardized design.
///
/// Starts from the residual scale of an OLS fit on the most correlated
/// columns (or `sd(y)`, see [`PenaltyPlan::initial_sigma_regressors`]), then alternates a lasso fit, an OLS refit on
/// its support, and `σ̂ = sqrt(RSS / n)` from that refit.
pub fn plugin_lambda(design: &StandardizedDesign, plan: &PenaltyPlan) -> Result<PluginEstimate> {
    plugin_lambda_with(design, plan, &[])
}

/// [`plugin_lambda`] with some columns exempt from the penalty. Exempt
/// columns do not count towards `p` in the quantile.
pub fn plugin_lambda_with(
    design: &StandardizedDesign,
    plan: &PenaltyPlan,
    unpenalized: &[usize],
) -> Result<PluginEstimate> {
    let n = design.n_obs();
    let p = design.n_features().saturating_sub(unpenalized.len()).max(1);
    if !(population_sd(design.y.iter().copied()) > 0.0) {
        return Err(Error::DegenerateResponse);
    }
    let mut sigma = initial_sigma(design, plan.initial_sigma_regressors, unpenalized)?;
    let initial_lambda = plugin_lambda_for_sigma(n, p, sigma, plan);
    let mut penalties = plugin_penalties(design, sigma, plan, unpenalized);
    let mut rounds = 0;
    while rounds < plan.max_sigma_iterations {
        rounds += 1;
        let fit = design.fit_weighted(penalties.view(), plan);
        let resid = refit_residuals(design, &fit)?;
        let next = (resid.dot(&resid) / n as f64).sqrt();
        let rel = (next - sigma).abs() / sigma;
        sigma = next;
        penalties = plugin_penalties(design, sigma, plan, unpenalized);
        if rel < plan.sigma_rel_tol || sigma == 0.0 {
            break;
        }
    }
    Ok(PluginEstimate {
        penalties,
        initial_lambda,
        sigma,
        rounds,
    })
}

fn initial_sigma(design: &StandardizedDesign, k: usize, unpenalized: &[usize]) -> Result<f64> {
    let n = design.n_obs();
    let resid = if k == 0 {
        design.y.clone()
    } else {
        let score = design.x.t().dot(&design.y);
        let mut order: Vec<usize> = (0..design.n_features()).filter(|j| !unpenalized.contains(j)).collect();
        order.sort_by(|&a, &b| score[b].abs().total_cmp(&score[a].abs()));
        let mut cols: Vec<usize> = unpenalized.to_vec();
        cols.extend(order.into_iter().take(k.min(n.saturating_sub(unpenalized.len() + 1))));
        cols.sort_unstable();
        match ols_fit_columns(design.x.view(), &cols, design.y.view(), false) {
            Ok(fit) => fit.residuals,
            Err(Error::RankDeficient { .. }) | Err(Error::TooFewObservations { .. }) => design.y.clone(),
            Err(e) => return Err(e),
        }
    };
    let sigma = (resid.dot(&resid) / n as f64).sqrt();
    Ok(if sigma > 0.0 {
        sigma
    } else {
        population_sd(design.y.iter().copied())
    })
}

/// Residuals of the OLS refit on a lasso support; falls back to the lasso
/// residuals when the support cannot be refit.
fn refit_residuals(design: &StandardizedDesign, fit: &LassoFit) -> Result<Array1<f64>> {
    match ols_fit_columns(design.x.view(), &fit.support, design.y.view(), false) {
        Ok(refit) => Ok(refit.residuals),
        Err(Error::RankDeficient { .. }) | Err(Error::TooFewObservations { .. }) => {
            Ok(&design.y - &design.x.dot(&fit.coefficients))
        }
        Err(e) => Err(e),
    }
}

/// Minimum-MSE λ over a log grid, scored by K contiguous folds.
pub fn cross_validated_lambda(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    intercept: bool,
    folds: usize,
    plan: &PenaltyPlan,
) -> Result<f64> {
    const GRID: usize = 60;
    const RATIO: f64 = 1e-3;
    let n = x.nrows();
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} rows into {folds} folds"
        )));
    }
    let full = StandardizedDesign::new(x, y, intercept)?;
    let top = lambda_max(full.x.view(), full.y.view());
    if top == 0.0 {
        return Ok(0.0);
    }
    let grid: Vec<f64> = (0..GRID)
        .map(|i| top * RATIO.powf(i as f64 / (GRID - 1) as f64))
        .collect();
    let mut sse = vec![0.0; GRID];
    for fold in 0..folds {
        let lo = fold * n / folds;
        let hi = (fold + 1) * n / folds;
        let train: Vec<usize> = (0..n).filter(|i| *i < lo || *i >= hi).collect();
        let tx = x.select(Axis(0), &train);
        let ty = y.select(Axis(0), &train);
        let design = StandardizedDesign::new(tx.view(), ty.view(), intercept)?;
        let scale = train.len() as f64 / n as f64;
        let mut warm: Option<Array1<f64>> = None;
        for (g, &lam) in grid.iter().enumerate() {
            let fit = coordinate_descent_from(
                design.x.view(),
                design.y.view(),
                lam * scale,
                plan.tol,
                plan.max_iter,
                warm.as_ref().map(|w| w.view()),
            );
            let (b0, b) = design.original_coefficients(fit.coefficients.view());
            let vx = x.slice(s![lo..hi, ..]);
            let pred = vx.dot(&b) + b0;
            let err = &y.slice(s![lo..hi]) - &pred;
            sse[g] += err.dot(&err);
            warm = Some(fit.coefficients);
        }
    }
    let best = sse
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    Ok(grid[best])
}

/// Resolve per-column penalties for a standardized design. Columns in
/// `unpenalized` get a zero penalty.
pub fn resolve_penalties(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    design: &StandardizedDesign,
    plan: &PenaltyPlan,
    unpenalized: &[usize],
) -> Result<Array1<f64>> {
    let k = design.n_features();
    let mut penalties = match plan.method {
        PenaltyMethod::FixedValue => Array1::from_elem(k, plan.lambda),
        PenaltyMethod::PluginIterated => plugin_lambda_with(design, plan, unpenalized)?.penalties,
        PenaltyMethod::CrossValidated { folds } => {
            Array1::from_elem(k, cross_validated_lambda(x, y, design.intercept, folds, plan)?)
        }
    };
    for &j in unpenalized {
        penalties[j] = 0.0;
    }
    Ok(penalties)
}

/// Lasso selection followed by an unpenalized refit.
#[derive(Debug, Clone, PartialEq)]
pub struct PostLassoFit {
    /// Solver output on the standardized design; `support` indexes the
    /// caller's columns.
    pub lasso: LassoFit,
    /// Lasso slopes on the original scale.
    pub lasso_slopes: Array1<f64>,
    pub lasso_intercept: f64,
    /// OLS on the selected columns (plus intercept when enabled).
    pub refit: LinearFit,
}

impl PostLassoFit {
    pub fn support(&self) -> &[usize] {
        &self.lasso.support
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        self.refit.predict(x)
    }

    /// In-sample predictions of the (shrunken) lasso step.
    pub fn lasso_predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.dot(&self.lasso_slopes) + self.lasso_intercept
    }
}

/// Lasso at the planned penalty, then OLS on the selected support.
/// An empty support yields the mean-only fit (intercept) or the zero fit.
pub fn post_lasso(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    plan: &PenaltyPlan,
    intercept: bool,
) -> Result<PostLassoFit> {
    post_lasso_with(x, y, plan, intercept, &[])
}

/// [`post_lasso`] keeping the `unpenalized` columns free of the penalty.
pub fn post_lasso_with(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    plan: &PenaltyPlan,
    intercept: bool,
    unpenalized: &[usize],
) -> Result<PostLassoFit> {
    if let Some(&bad) = unpenalized.iter().find(|&&j| j >= x.ncols()) {
        return Err(Error::InvalidArgument(format!("unpenalized column {bad} out of range")));
    }
    let design = StandardizedDesign::new(x, y, intercept)?;
    let penalties = resolve_penalties(x, y, &design, plan, unpenalized)?;
    let fit = design.fit_weighted(penalties.view(), plan).ensure_converged()?;
    let (lasso_intercept, lasso_slopes) = design.original_coefficients(fit.coefficients.view());
    let refit = ols_fit_columns(x, &fit.support, y, intercept)?;
    Ok(PostLassoFit {
        lasso: fit,
        lasso_slopes,
        lasso_intercept,
        refit,
    })
}
