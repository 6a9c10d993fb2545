//! Scenario parameters and dataset generation.
//!
//! Rows are i.i.d. draws of
//!
//! ```text
//! x ~ N(0, Σ),  Σ[k][j] = c^|j-k|
//! d = x'γ + ν,        ν ~ N(0, sigma_nu²)
//! y = α·d + x'β + ε,  ε ~ N(0, sigma_eps²)
//! ```
//!
//! The first `n_train` generated rows form the training block and the
//! remaining `n_holdout` rows the holdout block.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::estimators::EstimationOptions;
use crate::rng::{cholesky_factor, derive_stream, sample_mvn_rows_with_factor, CovarianceSpec, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PaperVariant {
    Base48,
    Extended72,
}

impl PaperVariant {
    pub const ALL: [PaperVariant; 2] = [PaperVariant::Base48, PaperVariant::Extended72];

    pub fn preset_name(self) -> &'static str {
        match self {
            PaperVariant::Base48 => "paper-base-48",
            PaperVariant::Extended72 => "paper-extended-72",
        }
    }

    pub fn from_preset_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.preset_name() == name)
    }

    /// Each preset draws from its own master seed, so the two sample sizes
    /// use independent data unless a caller overrides the seed.
    pub fn default_seed(self) -> u64 {
        match self {
            PaperVariant::Base48 => 20_200_548,
            PaperVariant::Extended72 => 20_200_572,
        }
    }
}

/// Full parameterization of one simulation scenario.
///
/// `beta` and `gamma` are stored 0-based; the text configuration uses
/// 1-based feature indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_train: usize,
    pub n_holdout: usize,
    pub p: usize,
    pub c: f64,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Standard deviation of the outcome noise.
    pub sigma_eps: f64,
    /// Standard deviation of the treatment noise.
    pub sigma_nu: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub estimation: EstimationOptions,
}

impl ScenarioConfig {
    pub fn paper(variant: PaperVariant) -> Self {
        let p = 40;
        let mut beta = vec![0.0; p];
        beta[38] = 1.0;
        beta[39] = 1.0;
        let gamma = beta.clone();
        let base = Self {
            n_train: 48,
            n_holdout: 12,
            p,
            c: 0.3,
            alpha: 0.0,
            beta,
            gamma,
            sigma_eps: 2.0,
            sigma_nu: 2.0,
            replications: 1000,
            master_seed: variant.default_seed(),
            estimation: EstimationOptions::default(),
        };
        match variant {
            PaperVariant::Base48 => base,
            PaperVariant::Extended72 => Self { n_train: 72, ..base },
        }
    }

    pub fn n_total(&self) -> usize {
        self.n_train + self.n_holdout
    }

    pub fn covariance(&self) -> CovarianceSpec {
        CovarianceSpec::new(self.p, self.c)
    }

    /// Structural checks needed to generate data at all.
    pub fn check_shape(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.p == 0 {
            problems.push("p must be positive".to_string());
        }
        if self.beta.len() != self.p {
            problems.push(format!("length(beta) = {} but p = {}", self.beta.len(), self.p));
        }
        if self.gamma.len() != self.p {
            problems.push(format!("length(gamma) = {} but p = {}", self.gamma.len(), self.p));
        }
        if self.n_train < 2 {
            problems.push("n_train must be at least 2".to_string());
        }
        if !(self.c.abs() < 1.0) {
            problems.push("|c| must be < 1".to_string());
        }
        if !(self.sigma_eps >= 0.0 && self.sigma_nu >= 0.0) {
            problems.push("noise scales must be non-negative".to_string());
        }
        if !self.alpha.is_finite() || self.beta.iter().chain(&self.gamma).any(|v| !v.is_finite()) {
            problems.push("coefficients must be finite".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }

    /// Full invariant check applied to user-supplied configurations.
    pub fn validate(&self) -> Result<()> {
        self.check_shape()?;
        let mut problems = Vec::new();
        if !(self.sigma_eps > 0.0) {
            problems.push("sigma_eps must be > 0".to_string());
        }
        if !(self.sigma_nu > 0.0) {
            problems.push("sigma_nu must be > 0".to_string());
        }
        if self.replications == 0 {
            problems.push("replications must be positive".to_string());
        }
        if let Err(e) = self.estimation.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }
}

/// One generated draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub x: Array2<f64>,
    pub d: Array1<f64>,
    pub y: Array1<f64>,
    pub train_rows: Range<usize>,
    pub holdout_rows: Range<usize>,
}

impl SimDataset {
    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn train_x(&self) -> ArrayView2<'_, f64> {
        self.x.slice(s![self.train_rows.clone(), ..])
    }

    pub fn train_d(&self) -> ArrayView1<'_, f64> {
        self.d.slice(s![self.train_rows.clone()])
    }

    pub fn train_y(&self) -> ArrayView1<'_, f64> {
        self.y.slice(s![self.train_rows.clone()])
    }

    pub fn holdout_x(&self) -> ArrayView2<'_, f64> {
        self.x.slice(s![self.holdout_rows.clone(), ..])
    }

    pub fn holdout_d(&self) -> ArrayView1<'_, f64> {
        self.d.slice(s![self.holdout_rows.clone()])
    }

    pub fn holdout_y(&self) -> ArrayView1<'_, f64> {
        self.y.slice(s![self.holdout_rows.clone()])
    }
}

/// Generate replication `rep_index` of a scenario. Pure in `(config, rep_index)`.
pub fn generate(config: &ScenarioConfig, rep_index: u64) -> Result<SimDataset> {
    config.check_shape()?;
    let factor = cholesky_factor(config.covariance())?;
    generate_with_factor(config, &factor, rep_index)
}

/// As [`generate`], reusing a Cholesky factor computed once per scenario.
pub fn generate_with_factor(config: &ScenarioConfig, factor: &Array2<f64>, rep_index: u64) -> Result<SimDataset> {
    let n = config.n_total();
    let mut stream = derive_stream(SeedSpec::new(config.master_seed, rep_index));
    let x = sample_mvn_rows_with_factor(&mut stream, factor, n)?;
    let nu: Array1<f64> = (0..n).map(|_| stream.next_normal()).collect();
    let eps: Array1<f64> = (0..n).map(|_| stream.next_normal()).collect();

    let beta = ArrayView1::from(&config.beta[..]);
    let gamma = ArrayView1::from(&config.gamma[..]);
    let d = x.dot(&gamma) + &(nu * config.sigma_nu);
    let y = &d * config.alpha + &x.dot(&beta) + &(eps * config.sigma_eps);

    Ok(SimDataset {
        x,
        d,
        y,
        train_rows: 0..config.n_train,
        holdout_rows: config.n_train..n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base48_setup() {
        let cfg = ScenarioConfig::paper(PaperVariant::Base48);
        assert_eq!(cfg.n_train, 48);
        assert_eq!(cfg.n_holdout, 12);
        assert_eq!(cfg.p, 40);
        assert_eq!(cfg.c, 0.3);
        assert_eq!(cfg.alpha, 0.0);
        assert_eq!(cfg.replications, 1000);
        let nz: Vec<(usize, f64)> = cfg
            .beta
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .collect();
        assert_eq!(nz, vec![(38, 1.0), (39, 1.0)]);
        assert_eq!(cfg.beta, cfg.gamma);
        cfg.validate().unwrap();
    }

    #[test]
    fn extended72_differs_only_in_n_train() {
        let base = ScenarioConfig::paper(PaperVariant::Base48);
        let ext = ScenarioConfig::paper(PaperVariant::Extended72);
        assert_eq!(ext.n_train, 72);
        assert_ne!(ext.master_seed, base.master_seed);
        assert_eq!(
            ScenarioConfig {
                n_train: 48,
                master_seed: base.master_seed,
                ..ext
            },
            base
        );
    }

    #[test]
    fn noiseless_outcome_identity() {
        let cfg = ScenarioConfig {
            sigma_eps: 0.0,
            sigma_nu: 0.0,
            alpha: 1.0,
            ..ScenarioConfig::paper(PaperVariant::Base48)
        };
        let ds = generate(&cfg, 3).unwrap();
        let xb = ds.x.dot(&ArrayView1::from(&cfg.beta[..]));
        for i in 0..ds.n_obs() {
            assert_eq!(ds.y[i] - (ds.d[i] + xb[i]), 0.0);
        }
    }

    #[test]
    fn shapes_and_split() {
        let cfg = ScenarioConfig::paper(PaperVariant::Base48);
        for rep in 0..5 {
            let ds = generate(&cfg, rep).unwrap();
            assert_eq!(ds.x.dim(), (60, 40));
            assert_eq!(ds.train_rows, 0..48);
            assert_eq!(ds.holdout_rows, 48..60);
            assert!(ds.x.iter().chain(ds.d.iter()).chain(ds.y.iter()).all(|v| v.is_finite()));
        }
    }

    #[test]
    fn generation_is_pure() {
        let cfg = ScenarioConfig::paper(PaperVariant::Base48);
        assert_eq!(generate(&cfg, 3).unwrap(), generate(&cfg, 3).unwrap());
        assert_ne!(generate(&cfg, 3).unwrap().y, generate(&cfg, 4).unwrap().y);
    }

    #[test]
    fn validation_catches_bad_c_and_lengths() {
        let mut cfg = ScenarioConfig::paper(PaperVariant::Base48);
        cfg.c = 1.5;
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
        let mut cfg = ScenarioConfig::paper(PaperVariant::Base48);
        cfg.beta.pop();
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn preset_names_round_trip() {
        for v in PaperVariant::ALL {
            assert_eq!(PaperVariant::from_preset_name(v.preset_name()), Some(v));
        }
        assert_eq!(PaperVariant::from_preset_name("nope"), None);
    }
}
