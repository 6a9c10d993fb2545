//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use dmlsim_core::dgp::SimDataset;
use dmlsim_core::estimators::infer_partialling_out;
use dmlsim_core::lasso::{coordinate_descent, kkt_violation, lambda_max};
use dmlsim_core::regress::ols_fit;
use dmlsim_core::{
    generate, run_study, EstimationOptions, FirstStage, ForecastMethod, InferenceMethod, PaperVariant, PipelineSet,
    ScenarioConfig,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Lasso at λ = 0 against OLS, relative to the largest OLS coefficient.
pub const OLS_EQUIVALENCE_TOL: f64 = 1e-6;
/// KKT violation allowed, as a fraction of λ_max for the design.
pub const KKT_TOL: f64 = 1e-6;
/// Relative gap between partialling-out with OLS first stages and joint OLS.
pub const FWL_TOL: f64 = 1e-8;
pub const NOISELESS_TOL: f64 = 1e-8;
/// Rejection rate band for the unconfounded null at R = 2000.
pub const NULL_SIZE_BAND: (f64, f64) = (0.03, 0.07);
pub const NULL_REPLICATIONS: usize = 2000;
pub const KKT_FITS: usize = 1000;

/// Gaussian design from an RNG independent of the crate's own streams.
pub fn random_design(seed: u64, n: usize, k: usize) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, k), |_| rng.sample::<f64, _>(StandardNormal));
    let beta = Array1::from_shape_fn(k, |j| if j % 3 == 0 { rng.random_range(-2.0..2.0) } else { 0.0 });
    let y = x.dot(&beta) + Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
    (x, y)
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn check_ols_equivalence(seed: u64) -> Result<(), String> {
    let (x, y) = random_design(seed, 60, 8);
    let fit = coordinate_descent(x.view(), y.view(), 0.0, 1e-13, 200_000);
    let ols = ols_fit(x.view(), y.view(), false).map_err(|e| e.to_string())?;
    let scale = ols.coefficients.iter().fold(1.0f64, |m, b| m.max(b.abs()));
    let gap = (&fit.coefficients - &ols.coefficients)
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()))
        / scale;
    if gap <= OLS_EQUIVALENCE_TOL {
        Ok(())
    } else {
        Err(format!("seed {seed}: λ=0 lasso differs from OLS by {gap:e}"))
    }
}

pub fn check_kill_lambda(seed: u64) -> Result<(), String> {
    let (x, y) = random_design(seed, 40, 12);
    let fit = coordinate_descent(x.view(), y.view(), lambda_max(x.view(), y.view()), 1e-10, 10_000);
    if fit.coefficients.iter().all(|&b| b == 0.0) && fit.support.is_empty() {
        Ok(())
    } else {
        Err(format!("seed {seed}: nonzero fit at λ_max"))
    }
}

/// One KKT check at a random fraction of λ_max.
pub fn check_kkt(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let n = rng.random_range(10..80);
    let k = rng.random_range(2..30);
    let (x, y) = random_design(seed, n, k);
    let lmax = lambda_max(x.view(), y.view());
    let lambda = lmax * rng.random_range(0.01..1.2);
    let fit = coordinate_descent(x.view(), y.view(), lambda, 1e-11, 200_000);
    let v = kkt_violation(x.view(), y.view(), fit.coefficients.view(), lambda);
    if fit.converged && v <= KKT_TOL * lmax.max(1.0) {
        Ok(())
    } else {
        Err(format!(
            "seed {seed}: n={n} k={k} converged={} violation {v:e}",
            fit.converged
        ))
    }
}

pub fn check_kkt_batch() -> Result<(), String> {
    (0..KKT_FITS as u64).try_for_each(check_kkt)
}

/// Training-only dataset around arbitrary arrays.
pub fn dataset(x: Array2<f64>, d: Array1<f64>, y: Array1<f64>) -> SimDataset {
    let n = x.nrows();
    SimDataset {
        x,
        d,
        y,
        train_rows: 0..n,
        holdout_rows: n..n,
    }
}

/// Partialling-out with OLS first stages against the joint OLS coefficient.
pub fn check_fwl(seed: u64, n: usize, p: usize) -> Result<(), String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (x, _) = random_design(seed.wrapping_add(1), n, p);
    let d = x.sum_axis(ndarray::Axis(1)) * 0.5 + Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
    let alpha = rng.random_range(-1.0..1.0);
    let y = &d * alpha + x.column(0).to_owned() + Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
    let opts = EstimationOptions {
        first_stage: FirstStage::Ols,
        ..EstimationOptions::default()
    };
    let po = infer_partialling_out(&dataset(x.clone(), d.clone(), y.clone()), &opts).map_err(|e| e.to_string())?;
    let joint_x = ndarray::concatenate![ndarray::Axis(1), d.view().insert_axis(ndarray::Axis(1)), x];
    let joint = ols_fit(joint_x.view(), y.view(), true).map_err(|e| e.to_string())?;
    let beta_d = joint.coefficients[joint.coefficient_index(0).expect("d column fitted")];
    let gap = relative_gap(po.alpha_hat, beta_d);
    if gap <= FWL_TOL {
        Ok(())
    } else {
        Err(format!(
            "seed {seed}: partialling-out {} vs joint OLS {beta_d} (gap {gap:e})",
            po.alpha_hat
        ))
    }
}

/// OLS forecasts on a noise-free outcome. The treatment keeps a sliver of
/// noise so `[d, x]` has full column rank.
pub fn check_noiseless() -> Result<(), String> {
    let cfg = ScenarioConfig {
        sigma_eps: 0.0,
        sigma_nu: 1e-3,
        replications: 20,
        ..ScenarioConfig::paper(PaperVariant::Base48)
    };
    let report = run_study(
        &cfg,
        PipelineSet {
            ols: true,
            ..PipelineSet::none()
        },
        1,
    )
    .map_err(|e| e.to_string())?;
    let row = report.forecast_row(ForecastMethod::Ols).expect("ols row");
    if row.successes == cfg.replications
        && row.mean_in_sample_rmse < NOISELESS_TOL
        && row.mean_out_of_sample_rmse < NOISELESS_TOL
    {
        Ok(())
    } else {
        Err(format!(
            "noiseless OLS RMSE {:e} / {:e}",
            row.mean_in_sample_rmse, row.mean_out_of_sample_rmse
        ))
    }
}

/// Base48 with γ = 0: the treatment is independent of the controls.
pub fn unconfounded_config(replications: usize) -> ScenarioConfig {
    let base = ScenarioConfig::paper(PaperVariant::Base48);
    ScenarioConfig {
        gamma: vec![0.0; base.p],
        replications,
        master_seed: 7_001,
        ..base
    }
}

/// Rejection rates of (naive, partialling-out) under the unconfounded null.
pub fn null_rejection_rates(jobs: usize) -> Result<(f64, f64, f64), String> {
    let cfg = unconfounded_config(NULL_REPLICATIONS);
    let pipes = PipelineSet {
        naive: true,
        partialling_out: true,
        ..PipelineSet::none()
    };
    let report = run_study(&cfg, pipes, jobs).map_err(|e| e.to_string())?;
    let naive = report.inference_row(InferenceMethod::Naive).expect("naive row");
    let po = report.inference_row(InferenceMethod::PartiallingOut).expect("po row");
    Ok((naive.rejection_rate, po.rejection_rate, naive.mean_estimate))
}

pub fn check_null_size(jobs: usize) -> Result<(), String> {
    let (naive, po, _) = null_rejection_rates(jobs)?;
    let (lo, hi) = NULL_SIZE_BAND;
    if (lo..=hi).contains(&naive) && (lo..=hi).contains(&po) {
        Ok(())
    } else {
        Err(format!(
            "null rejection rates naive {naive:.3}, partialling-out {po:.3}"
        ))
    }
}

/// Reports for a fixed seed at two thread counts, runtime aside.
pub fn check_parallel_determinism(replications: usize) -> Result<(), String> {
    let cfg = ScenarioConfig {
        replications,
        ..ScenarioConfig::paper(PaperVariant::Base48)
    };
    let a = run_study(&cfg, PipelineSet::all(), 1).map_err(|e| e.to_string())?;
    let b = run_study(&cfg, PipelineSet::all(), 8).map_err(|e| e.to_string())?;
    if a.records != b.records {
        return Err("per-replication records differ across thread counts".into());
    }
    if a.forecast_rows != b.forecast_rows || a.inference_rows != b.inference_rows {
        return Err("aggregate rows differ across thread counts".into());
    }
    let first = generate(&cfg, 3).map_err(|e| e.to_string())?;
    let again = generate(&cfg, 3).map_err(|e| e.to_string())?;
    if first != again {
        return Err("dataset generation is not reproducible".into());
    }
    Ok(())
}
