//! The four study pipelines. Each maps one [`SimDataset`] to metrics.
//!
//! Forecasting pipelines regress `y` on `[d, x₁..x_p]` over the training
//! rows and score the holdout rows. Inference pipelines use training rows
//! only and test `α = 0` for the treatment `d`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::dgp::SimDataset;
use crate::error::{Error, Result};
use crate::lasso::{post_lasso, post_lasso_with, PenaltyPlan};
use crate::regress::{coefficient_test, ols_fit, ols_fit_columns, rmse};

/// Learner used for the nuisance regressions of the partialling-out estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FirstStage {
    #[default]
    PostLasso,
    /// Plain OLS on all controls; turns partialling-out into the
    /// Frisch-Waugh-Lovell regression.
    Ols,
}

/// Role of the treatment in the naive estimator's selection lasso.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NaiveSelection {
    /// Select controls from `y ~ x`; `d` is added afterwards.
    #[default]
    ExcludeD,
    /// Select from `y ~ [d, x]` with `d` penalized like any control.
    PenalizedD,
    /// Select from `y ~ [d, x]` with `d` kept out of the penalty.
    UnpenalizedD,
}

/// Knobs shared by all pipelines of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationOptions {
    pub intercept: bool,
    pub penalty: PenaltyPlan,
    /// `None` disables cross-fitting.
    pub cross_fit_folds: Option<usize>,
    /// How the naive estimator's selection step treats `d`.
    pub naive_selection: NaiveSelection,
    pub first_stage: FirstStage,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self {
            intercept: true,
            penalty: PenaltyPlan::default(),
            cross_fit_folds: None,
            naive_selection: NaiveSelection::default(),
            first_stage: FirstStage::PostLasso,
        }
    }
}

impl EstimationOptions {
    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        if let Some(k) = self.cross_fit_folds {
            if k < 2 {
                return Err(Error::Validation("cross_fit_folds must be >= 2".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ForecastMethod {
    Ols,
    PostLasso,
}

impl ForecastMethod {
    pub fn label(self) -> &'static str {
        match self {
            ForecastMethod::Ols => "OLS",
            ForecastMethod::PostLasso => "Post-lasso",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastMetrics {
    pub method: ForecastMethod,
    pub in_sample_rmse: f64,
    pub out_of_sample_rmse: f64,
    /// Selected `x` features, excluding the intercept and `d`. Post-lasso only.
    pub support_size: Option<usize>,
    /// Whether the lasso kept `d`. Post-lasso only.
    pub treatment_selected: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InferenceMethod {
    Naive,
    PartiallingOut,
}

impl InferenceMethod {
    pub fn label(self) -> &'static str {
        match self {
            InferenceMethod::Naive => "Naive",
            InferenceMethod::PartiallingOut => "Partialling-out",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceEstimate {
    pub method: InferenceMethod,
    pub alpha_hat: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub rejected_at_5pct: bool,
    /// Selected controls in the outcome and treatment first stages
    /// (averaged over folds when cross-fitting). The naive estimator has
    /// no treatment stage and reports 0 there.
    pub first_stage_support_sizes: (f64, f64),
}

/// `[d, x]` with `d` in column 0.
fn with_treatment(d: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>) -> Array2<f64> {
    concatenate(Axis(1), &[d.insert_axis(Axis(1)), x]).expect("row counts agree")
}

pub fn forecast_ols(data: &SimDataset, opts: &EstimationOptions) -> Result<ForecastMetrics> {
    let train = with_treatment(data.train_d(), data.train_x());
    let fit = ols_fit(train.view(), data.train_y(), opts.intercept)?;
    let holdout = with_treatment(data.holdout_d(), data.holdout_x());
    let in_sample_rmse = rmse(data.train_y(), fit.fitted.view())?;
    let out_of_sample_rmse = if holdout.nrows() == 0 {
        f64::NAN
    } else {
        rmse(data.holdout_y(), fit.predict(holdout.view()).view())?
    };
    Ok(ForecastMetrics {
        method: ForecastMethod::Ols,
        in_sample_rmse,
        out_of_sample_rmse,
        support_size: None,
        treatment_selected: None,
    })
}

pub fn forecast_post_lasso(data: &SimDataset, opts: &EstimationOptions) -> Result<ForecastMetrics> {
    let train = with_treatment(data.train_d(), data.train_x());
    let fit = post_lasso(train.view(), data.train_y(), &opts.penalty, opts.intercept)?;
    let holdout = with_treatment(data.holdout_d(), data.holdout_x());
    let in_sample_rmse = rmse(data.train_y(), fit.refit.fitted.view())?;
    let out_of_sample_rmse = if holdout.nrows() == 0 {
        f64::NAN
    } else {
        rmse(data.holdout_y(), fit.predict(holdout.view()).view())?
    };
    let treatment_selected = fit.support().contains(&0);
    Ok(ForecastMetrics {
        method: ForecastMethod::PostLasso,
        in_sample_rmse,
        out_of_sample_rmse,
        support_size: Some(fit.support().len() - usize::from(treatment_selected)),
        treatment_selected: Some(treatment_selected),
    })
}

/// Post-lasso selection of `y` on the controls, then OLS of `y` on `d`
/// plus the selected controls, reading off the test for `d`.
pub fn infer_naive(data: &SimDataset, opts: &EstimationOptions) -> Result<InferenceEstimate> {
    let x = data.train_x();
    let y = data.train_y();
    let d = data.train_d();
    let selected: Vec<usize> = match opts.naive_selection {
        NaiveSelection::ExcludeD => post_lasso(x, y, &opts.penalty, opts.intercept)?.support().to_vec(),
        mode => {
            let design = with_treatment(d, x);
            let free: &[usize] = if mode == NaiveSelection::UnpenalizedD {
                &[0]
            } else {
                &[]
            };
            let sel = post_lasso_with(design.view(), y, &opts.penalty, opts.intercept, free)?;
            sel.support().iter().filter(|&&c| c != 0).map(|&c| c - 1).collect()
        }
    };

    let design = with_treatment(d, x);
    let mut columns = Vec::with_capacity(selected.len() + 1);
    columns.push(0);
    columns.extend(selected.iter().map(|&c| c + 1));
    let fit = ols_fit_columns(design.view(), &columns, y, opts.intercept)?;
    let index = fit.coefficient_index(0).expect("treatment is always included");
    let test = coefficient_test(&fit, index)?;
    Ok(InferenceEstimate {
        method: InferenceMethod::Naive,
        alpha_hat: test.estimate,
        std_error: test.std_error,
        t_stat: test.t_stat,
        p_value: test.p_value,
        rejected_at_5pct: test.rejected_at_5pct,
        first_stage_support_sizes: (selected.len() as f64, 0.0),
    })
}

/// Out-of-sample residuals of a nuisance regression, with the number of
/// selected controls (all controls for OLS).
fn nuisance_residuals(
    x_fit: ArrayView2<'_, f64>,
    target_fit: ArrayView1<'_, f64>,
    x_eval: ArrayView2<'_, f64>,
    target_eval: ArrayView1<'_, f64>,
    opts: &EstimationOptions,
) -> Result<(Array1<f64>, usize)> {
    match opts.first_stage {
        FirstStage::PostLasso => {
            let fit = post_lasso(x_fit, target_fit, &opts.penalty, opts.intercept)?;
            Ok((&target_eval - &fit.predict(x_eval), fit.support().len()))
        }
        FirstStage::Ols => {
            let fit = ols_fit(x_fit, target_fit, opts.intercept)?;
            Ok((&target_eval - &fit.predict(x_eval), x_fit.ncols()))
        }
    }
}

/// Residual-on-residual estimator. First stages regress `y` and `d` on the
/// controls; the final stage is OLS of the outcome residuals on the
/// treatment residuals without intercept (`n - 1` degrees of freedom).
pub fn infer_partialling_out(data: &SimDataset, opts: &EstimationOptions) -> Result<InferenceEstimate> {
    let x = data.train_x();
    let y = data.train_y();
    let d = data.train_d();
    let n = x.nrows();

    let (ey, ed, sizes) = match opts.cross_fit_folds {
        None => {
            let (ey, sy) = nuisance_residuals(x, y, x, y, opts)?;
            let (ed, sd) = nuisance_residuals(x, d, x, d, opts)?;
            (ey, ed, (sy as f64, sd as f64))
        }
        Some(folds) => {
            if folds < 2 || folds > n {
                return Err(Error::InvalidArgument(format!(
                    "cannot split {n} rows into {folds} folds"
                )));
            }
            let mut ey = Array1::<f64>::zeros(n);
            let mut ed = Array1::<f64>::zeros(n);
            let (mut sy, mut sd) = (0usize, 0usize);
            for fold in 0..folds {
                let lo = fold * n / folds;
                let hi = (fold + 1) * n / folds;
                let rest: Vec<usize> = (0..n).filter(|i| *i < lo || *i >= hi).collect();
                let xr = x.select(Axis(0), &rest);
                let yr = y.select(Axis(0), &rest);
                let dr = d.select(Axis(0), &rest);
                let xe = x.slice(s![lo..hi, ..]);
                let (ry, ky) = nuisance_residuals(xr.view(), yr.view(), xe, y.slice(s![lo..hi]), opts)?;
                let (rd, kd) = nuisance_residuals(xr.view(), dr.view(), xe, d.slice(s![lo..hi]), opts)?;
                ey.slice_mut(s![lo..hi]).assign(&ry);
                ed.slice_mut(s![lo..hi]).assign(&rd);
                sy += ky;
                sd += kd;
            }
            (ey, ed, (sy as f64 / folds as f64, sd as f64 / folds as f64))
        }
    };

    let ed_scale = ed.dot(&ed);
    if !(ed_scale > 1e-24 * (d.dot(&d)).max(1e-300)) {
        return Err(Error::DegenerateResiduals);
    }
    let design = ed.insert_axis(Axis(1));
    let fit = ols_fit(design.view(), ey.view(), false).map_err(|e| match e {
        Error::RankDeficient { .. } => Error::DegenerateResiduals,
        other => other,
    })?;
    let test = coefficient_test(&fit, 0)?;
    Ok(InferenceEstimate {
        method: InferenceMethod::PartiallingOut,
        alpha_hat: test.estimate,
        std_error: test.std_error,
        t_stat: test.t_stat,
        p_value: test.p_value,
        rejected_at_5pct: test.rejected_at_5pct,
        first_stage_support_sizes: sizes,
    })
}
