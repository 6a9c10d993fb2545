//! Replication orchestration and cross-replication summaries.

use std::time::Instant;

use rayon::prelude::*;

use crate::dgp::{generate_with_factor, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimators::{
    forecast_ols, forecast_post_lasso, infer_naive, infer_partialling_out, ForecastMethod, ForecastMetrics,
    InferenceEstimate, InferenceMethod,
};
use crate::rng::cholesky_factor;
use crate::stats::{mean, normal_pdf, sample_sd, student_t_two_sided_p};

/// Which pipelines to run per replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PipelineSet {
    pub ols: bool,
    pub post_lasso: bool,
    pub naive: bool,
    pub partialling_out: bool,
}

impl PipelineSet {
    pub fn all() -> Self {
        Self {
            ols: true,
            post_lasso: true,
            naive: true,
            partialling_out: true,
        }
    }

    pub fn none() -> Self {
        Self {
            ols: false,
            post_lasso: false,
            naive: false,
            partialling_out: false,
        }
    }

    pub fn forecast_methods(&self) -> Vec<ForecastMethod> {
        let mut out = Vec::new();
        if self.ols {
            out.push(ForecastMethod::Ols);
        }
        if self.post_lasso {
            out.push(ForecastMethod::PostLasso);
        }
        out
    }

    pub fn inference_methods(&self) -> Vec<InferenceMethod> {
        let mut out = Vec::new();
        if self.naive {
            out.push(InferenceMethod::Naive);
        }
        if self.partialling_out {
            out.push(InferenceMethod::PartiallingOut);
        }
        out
    }
}

impl Default for PipelineSet {
    fn default() -> Self {
        Self::all()
    }
}

/// Everything one replication produced. `None` means the pipeline was not
/// requested.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep_index: u64,
    pub ols: Option<Result<ForecastMetrics>>,
    pub post_lasso: Option<Result<ForecastMetrics>>,
    pub naive: Option<Result<InferenceEstimate>>,
    pub partialling_out: Option<Result<InferenceEstimate>>,
}

impl ReplicationRecord {
    pub fn forecast(&self, method: ForecastMethod) -> Option<&Result<ForecastMetrics>> {
        match method {
            ForecastMethod::Ols => self.ols.as_ref(),
            ForecastMethod::PostLasso => self.post_lasso.as_ref(),
        }
    }

    pub fn inference(&self, method: InferenceMethod) -> Option<&Result<InferenceEstimate>> {
        match method {
            InferenceMethod::Naive => self.naive.as_ref(),
            InferenceMethod::PartiallingOut => self.partialling_out.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub method: ForecastMethod,
    pub successes: usize,
    pub failures: usize,
    pub mean_in_sample_rmse: f64,
    pub mean_out_of_sample_rmse: f64,
    /// Mean selected `x` features (post-lasso only).
    pub mean_support_size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRow {
    pub method: InferenceMethod,
    pub successes: usize,
    pub failures: usize,
    pub rejections: usize,
    pub mean_estimate: f64,
    /// Sample sd of the estimates; NaN with fewer than two successes.
    pub sd_estimate: f64,
    /// `mean / (sd / √R)`.
    pub t_stat_of_mean: f64,
    /// Two-sided, Student-t with `R - 1` dof.
    pub p_value_of_mean: f64,
    pub rejection_rate: f64,
}

/// Per-replication series available for histograms and exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Series {
    OosRmseOls,
    OosRmsePostLasso,
    AlphaNaive,
    AlphaPartialling,
}

impl Series {
    pub fn slug(self) -> &'static str {
        match self {
            Series::OosRmseOls => "oos_rmse_ols",
            Series::OosRmsePostLasso => "oos_rmse_post_lasso",
            Series::AlphaNaive => "alpha_naive",
            Series::AlphaPartialling => "alpha_partialling_out",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub scenario: ScenarioConfig,
    pub pipelines: PipelineSet,
    pub forecast_rows: Vec<ForecastRow>,
    pub inference_rows: Vec<InferenceRow>,
    pub records: Vec<ReplicationRecord>,
    pub runtime_seconds: f64,
}

impl AggregateReport {
    /// Summarize records in replication-index order.
    pub fn from_records(
        scenario: ScenarioConfig,
        pipelines: PipelineSet,
        records: Vec<ReplicationRecord>,
        runtime_seconds: f64,
    ) -> Self {
        let forecast_rows = pipelines
            .forecast_methods()
            .into_iter()
            .map(|m| summarize_forecast(m, &records))
            .collect();
        let inference_rows = pipelines
            .inference_methods()
            .into_iter()
            .map(|m| summarize_inference(m, &records))
            .collect();
        Self {
            scenario,
            pipelines,
            forecast_rows,
            inference_rows,
            records,
            runtime_seconds,
        }
    }

    pub fn forecast_row(&self, method: ForecastMethod) -> Option<&ForecastRow> {
        self.forecast_rows.iter().find(|r| r.method == method)
    }

    pub fn inference_row(&self, method: InferenceMethod) -> Option<&InferenceRow> {
        self.inference_rows.iter().find(|r| r.method == method)
    }

    /// Successful values of a series, in replication order.
    pub fn series(&self, which: Series) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match which {
                Series::OosRmseOls => ok_forecast(r.ols.as_ref()).map(|m| m.out_of_sample_rmse),
                Series::OosRmsePostLasso => ok_forecast(r.post_lasso.as_ref()).map(|m| m.out_of_sample_rmse),
                Series::AlphaNaive => ok_inference(r.naive.as_ref()).map(|e| e.alpha_hat),
                Series::AlphaPartialling => ok_inference(r.partialling_out.as_ref()).map(|e| e.alpha_hat),
            })
            .collect()
    }

    /// `(rep_index, error)` for every failed pipeline run.
    pub fn failures(&self) -> Vec<(u64, &'static str, &Error)> {
        let mut out = Vec::new();
        for r in &self.records {
            for (label, res) in [
                ("ols", r.ols.as_ref().and_then(|x| x.as_ref().err())),
                ("post_lasso", r.post_lasso.as_ref().and_then(|x| x.as_ref().err())),
                ("naive", r.naive.as_ref().and_then(|x| x.as_ref().err())),
                (
                    "partialling_out",
                    r.partialling_out.as_ref().and_then(|x| x.as_ref().err()),
                ),
            ] {
                if let Some(e) = res {
                    out.push((r.rep_index, label, e));
                }
            }
        }
        out
    }
}

fn ok_forecast(r: Option<&Result<ForecastMetrics>>) -> Option<&ForecastMetrics> {
    r.and_then(|x| x.as_ref().ok())
}

fn ok_inference(r: Option<&Result<InferenceEstimate>>) -> Option<&InferenceEstimate> {
    r.and_then(|x| x.as_ref().ok())
}

fn mean_or_nan(values: &[f64]) -> f64 {
    mean(values).unwrap_or(f64::NAN)
}

fn summarize_forecast(method: ForecastMethod, records: &[ReplicationRecord]) -> ForecastRow {
    let mut ins = Vec::new();
    let mut oos = Vec::new();
    let mut support = Vec::new();
    let mut failures = 0;
    for r in records {
        match r.forecast(method) {
            Some(Ok(m)) => {
                ins.push(m.in_sample_rmse);
                oos.push(m.out_of_sample_rmse);
                if let Some(s) = m.support_size {
                    support.push(s as f64);
                }
            }
            Some(Err(_)) => failures += 1,
            None => {}
        }
    }
    ForecastRow {
        method,
        successes: ins.len(),
        failures,
        mean_in_sample_rmse: mean_or_nan(&ins),
        mean_out_of_sample_rmse: mean_or_nan(&oos),
        mean_support_size: match method {
            ForecastMethod::PostLasso => Some(mean_or_nan(&support)),
            ForecastMethod::Ols => None,
        },
    }
}

fn summarize_inference(method: InferenceMethod, records: &[ReplicationRecord]) -> InferenceRow {
    let mut alphas = Vec::new();
    let mut rejections = 0;
    let mut failures = 0;
    for r in records {
        match r.inference(method) {
            Some(Ok(e)) => {
                alphas.push(e.alpha_hat);
                rejections += usize::from(e.rejected_at_5pct);
            }
            Some(Err(_)) => failures += 1,
            None => {}
        }
    }
    let successes = alphas.len();
    let mean_estimate = mean_or_nan(&alphas);
    let sd_estimate = sd_of_estimates(&alphas).unwrap_or(f64::NAN);
    let t_stat_of_mean = mean_estimate / (sd_estimate / (successes as f64).sqrt());
    let p_value_of_mean = if successes >= 2 && t_stat_of_mean.is_finite() {
        student_t_two_sided_p(t_stat_of_mean, (successes - 1) as f64)
    } else {
        f64::NAN
    };
    InferenceRow {
        method,
        successes,
        failures,
        rejections,
        mean_estimate,
        sd_estimate,
        t_stat_of_mean,
        p_value_of_mean,
        rejection_rate: if successes == 0 {
            f64::NAN
        } else {
            rejections as f64 / successes as f64
        },
    }
}

/// Sample standard deviation (divisor `R - 1`).
pub fn sd_of_estimates(values: &[f64]) -> Result<f64> {
    sample_sd(values)
}

/// Run one replication of every requested pipeline.
pub fn run_replication(
    config: &ScenarioConfig,
    factor: &ndarray::Array2<f64>,
    pipelines: PipelineSet,
    rep_index: u64,
) -> ReplicationRecord {
    let opts = &config.estimation;
    match generate_with_factor(config, factor, rep_index) {
        Ok(data) => ReplicationRecord {
            rep_index,
            ols: pipelines.ols.then(|| forecast_ols(&data, opts)),
            post_lasso: pipelines.post_lasso.then(|| forecast_post_lasso(&data, opts)),
            naive: pipelines.naive.then(|| infer_naive(&data, opts)),
            partialling_out: pipelines.partialling_out.then(|| infer_partialling_out(&data, opts)),
        },
        Err(e) => ReplicationRecord {
            rep_index,
            ols: pipelines.ols.then(|| Err(e.clone())),
            post_lasso: pipelines.post_lasso.then(|| Err(e.clone())),
            naive: pipelines.naive.then(|| Err(e.clone())),
            partialling_out: pipelines.partialling_out.then(|| Err(e.clone())),
        },
    }
}

/// Run `config.replications` replications on `parallelism` worker threads.
///
/// Each replication seeds its own stream from `(master_seed, rep_index)`
/// and results are collected in index order, so the report does not depend
/// on the thread count.
pub fn run_study(config: &ScenarioConfig, pipelines: PipelineSet, parallelism: usize) -> Result<AggregateReport> {
    if config.replications == 0 {
        return Err(Error::InvalidArgument("replications must be at least 1".into()));
    }
    config.check_shape()?;
    let factor = cholesky_factor(config.covariance())?;
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let records: Vec<ReplicationRecord> = pool.install(|| {
        (0..config.replications as u64)
            .into_par_iter()
            .map(|rep| run_replication(config, &factor, pipelines, rep))
            .collect()
    });
    let runtime = started.elapsed().as_secs_f64();
    Ok(AggregateReport::from_records(
        config.clone(),
        pipelines,
        records,
        runtime,
    ))
}

/// Equal-width histogram with a fitted normal overlay.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges from min to max.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    /// Sample sd; NaN for a single value.
    pub sd: f64,
    /// `(x, density)` of `N(mean, sd²)` at 200 points across `[min, max]`.
    /// Empty when the sd is zero or undefined.
    pub overlay: Vec<(f64, f64)>,
}

impl Histogram {
    pub const OVERLAY_POINTS: usize = 200;

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        (self.edges[self.edges.len() - 1] - self.edges[0]) / self.counts.len() as f64
    }
}

pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if bins < 2 {
        return Err(Error::InvalidArgument("histogram needs at least 2 bins".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = if width > 0.0 {
            (((v - lo) / width).floor() as usize).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    let m = mean(values)?;
    let sd = sample_sd(values).unwrap_or(f64::NAN);
    let overlay = if sd > 0.0 && hi > lo {
        let n = Histogram::OVERLAY_POINTS;
        (0..n)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                (x, normal_pdf(x, m, sd))
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(Histogram {
        edges,
        counts,
        mean: m,
        sd,
        overlay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::PaperVariant;
    use crate::rng::{derive_stream, SeedSpec};
    use crate::stats::normal_cdf;

    #[test]
    fn sd_examples() {
        assert_eq!(sd_of_estimates(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!((sd_of_estimates(&[0.0, 2.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(sd_of_estimates(&[0.0]), Err(Error::TooFew { .. })));
    }

    #[test]
    fn constant_histogram_has_one_bin() {
        let h = histogram(&[3.0; 10], 5).unwrap();
        assert_eq!(h.counts.iter().filter(|c| **c > 0).count(), 1);
        assert_eq!(h.total(), 10);
        assert!(h.overlay.is_empty());
        assert!(matches!(histogram(&[], 5), Err(Error::EmptyInput)));
    }

    #[test]
    fn normal_histogram_within_poisson_band() {
        let mut s = derive_stream(SeedSpec::new(99, 0));
        let v: Vec<f64> = (0..100_000).map(|_| s.next_normal()).collect();
        let h = histogram(&v, 50).unwrap();
        assert_eq!(h.total(), v.len());
        assert_eq!(h.overlay.len(), 200);
        for b in 0..50 {
            let mass = normal_cdf(h.edges[b + 1]) - normal_cdf(h.edges[b]);
            let expected = mass * v.len() as f64;
            let dev = (h.counts[b] as f64 - expected).abs();
            assert!(
                dev < 3.0 * expected.sqrt().max(1.0),
                "bin {b}: {} vs {expected}",
                h.counts[b]
            );
        }
    }

    #[test]
    fn single_replication_report() {
        let mut cfg = ScenarioConfig::paper(PaperVariant::Base48);
        cfg.replications = 1;
        let report = run_study(&cfg, PipelineSet::all(), 1).unwrap();
        let rec = &report.records[0];
        let pl = rec.post_lasso.as_ref().unwrap().as_ref().unwrap();
        let row = report.forecast_row(ForecastMethod::PostLasso).unwrap();
        assert_eq!(row.mean_out_of_sample_rmse, pl.out_of_sample_rmse);
        assert_eq!(row.mean_in_sample_rmse, pl.in_sample_rmse);
        let po = rec.partialling_out.as_ref().unwrap().as_ref().unwrap();
        let irow = report.inference_row(InferenceMethod::PartiallingOut).unwrap();
        assert_eq!(irow.mean_estimate, po.alpha_hat);
        assert!(irow.sd_estimate.is_nan());
        assert_eq!(irow.rejection_rate, if po.rejected_at_5pct { 1.0 } else { 0.0 });
    }

    #[test]
    fn failed_replications_are_counted() {
        let mut cfg = ScenarioConfig::paper(PaperVariant::Base48);
        cfg.n_train = 40;
        cfg.replications = 3;
        let report = run_study(&cfg, PipelineSet::all(), 2).unwrap();
        let ols = report.forecast_row(ForecastMethod::Ols).unwrap();
        assert_eq!((ols.successes, ols.failures), (0, 3));
        assert!(ols.mean_out_of_sample_rmse.is_nan());
        let pl = report.forecast_row(ForecastMethod::PostLasso).unwrap();
        assert_eq!(pl.successes + pl.failures, 3);
        assert_eq!(report.failures().iter().filter(|f| f.1 == "ols").count(), 3);
    }
}
