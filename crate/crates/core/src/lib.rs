//! Monte Carlo laboratory contrasting post-lasso and OLS forecasting with
//! naive post-selection and partialling-out inference on a confounded,
//! sparse linear model.

// Validation uses `!(x > 0.0)` style checks so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod lasso;
pub mod montecarlo;
pub mod regress;
pub mod report;
pub mod rng;
pub mod stats;

pub use config::{parse_config, preset, serialize_config};
pub use dgp::{generate, PaperVariant, ScenarioConfig, SimDataset};
pub use error::{Error, Result};
pub use estimators::{
    EstimationOptions, FirstStage, ForecastMethod, ForecastMetrics, InferenceEstimate, InferenceMethod, NaiveSelection,
};
pub use lasso::{LassoFit, PenaltyMethod, PenaltyPlan};
pub use montecarlo::{run_study, AggregateReport, Histogram, PipelineSet, ReplicationRecord, Series};
pub use regress::{CoefficientTest, LinearFit};
pub use report::{RunManifest, TableFormat};
