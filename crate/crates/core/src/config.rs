//! Flat `key = value` scenario files.
//!
//! ```text
//! # comments run to end of line
//! n_train = 48
//! beta_nonzero = 39:1, 40:1
//! penalty_method = plugin
//! ```
//!
//! Feature indices in `beta_nonzero` / `gamma_nonzero` are 1-based.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::dgp::{PaperVariant, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimators::{EstimationOptions, FirstStage, NaiveSelection};
use crate::lasso::{PenaltyMethod, PenaltyPlan};

pub const REQUIRED_KEYS: [&str; 11] = [
    "n_train",
    "n_holdout",
    "p",
    "c",
    "alpha",
    "sigma_eps",
    "sigma_nu",
    "replications",
    "master_seed",
    "beta_nonzero",
    "gamma_nonzero",
];

pub const OPTIONAL_KEYS: [&str; 8] = [
    "penalty_method",
    "plugin_c",
    "plugin_gamma",
    "initial_sigma_regressors",
    "cross_fit_folds",
    "intercept",
    "naive_selection_includes_d",
    "first_stage",
];

/// Names accepted by [`preset`].
pub fn preset_names() -> Vec<&'static str> {
    PaperVariant::ALL.iter().map(|v| v.preset_name()).collect()
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    PaperVariant::from_preset_name(name).map(ScenarioConfig::paper)
}

struct Entry<'a> {
    line: usize,
    value: &'a str,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(e: &Entry<'_>, key: &str) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| parse_err(e.line, format!("{key}: cannot parse {:?}", e.value)))
}

fn boolean(e: &Entry<'_>, key: &str) -> Result<bool> {
    match e.value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(parse_err(
            e.line,
            format!("{key}: expected true or false, got {:?}", e.value),
        )),
    }
}

/// `"39:1, 40:-0.5"` into a dense 0-based vector of length `p`.
fn sparse_vector(e: &Entry<'_>, key: &str, p: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; p];
    let mut seen = vec![false; p];
    for item in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (idx, val) = item
            .split_once(':')
            .ok_or_else(|| parse_err(e.line, format!("{key}: expected index:value, got {item:?}")))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| parse_err(e.line, format!("{key}: bad index {:?}", idx.trim())))?;
        let val: f64 = val
            .trim()
            .parse()
            .map_err(|_| parse_err(e.line, format!("{key}: bad value {:?}", val.trim())))?;
        if idx == 0 || idx > p {
            return Err(Error::Validation(format!("{key}: index {idx} outside 1..={p}")));
        }
        if seen[idx - 1] {
            return Err(parse_err(e.line, format!("{key}: index {idx} given twice")));
        }
        seen[idx - 1] = true;
        out[idx - 1] = val;
    }
    Ok(out)
}

fn penalty_method(e: &Entry<'_>) -> Result<(PenaltyMethod, f64)> {
    let v = e.value.to_ascii_lowercase();
    let bad = || {
        parse_err(
            e.line,
            format!(
                "penalty_method: expected plugin, fixed:<lambda> or cv[:<folds>], got {:?}",
                e.value
            ),
        )
    };
    match v.split_once(':') {
        None if v == "plugin" => Ok((PenaltyMethod::PluginIterated, 0.0)),
        None if v == "cv" => Ok((
            PenaltyMethod::CrossValidated {
                folds: PenaltyMethod::DEFAULT_CV_FOLDS,
            },
            0.0,
        )),
        Some(("fixed", lam)) => Ok((PenaltyMethod::FixedValue, lam.trim().parse().map_err(|_| bad())?)),
        Some(("cv", k)) => Ok((
            PenaltyMethod::CrossValidated {
                folds: k.trim().parse().map_err(|_| bad())?,
            },
            0.0,
        )),
        _ => Err(bad()),
    }
}

/// Parse a scenario file and validate the result.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let known = |k: &str| REQUIRED_KEYS.contains(&k) || OPTIONAL_KEYS.contains(&k);
    let mut entries: BTreeMap<&str, Entry<'_>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected `key = value`, got {body:?}")))?;
        let key = key.trim();
        if !known(key) {
            return Err(parse_err(line, format!("unknown key {key:?}")));
        }
        if let Some(prev) = entries.get(key) {
            return Err(parse_err(line, format!("{key} already set on line {}", prev.line)));
        }
        entries.insert(
            key,
            Entry {
                line,
                value: value.trim(),
            },
        );
    }

    let missing: Vec<&str> = REQUIRED_KEYS
        .iter()
        .copied()
        .filter(|k| !entries.contains_key(k))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "missing required keys: {}",
            missing.join(", ")
        )));
    }
    let req = |k: &str| &entries[k];

    let p: usize = number(req("p"), "p")?;
    let mut estimation = EstimationOptions::default();
    if let Some(e) = entries.get("penalty_method") {
        let (method, lambda) = penalty_method(e)?;
        estimation.penalty.method = method;
        estimation.penalty.lambda = lambda;
    }
    if let Some(e) = entries.get("plugin_c") {
        estimation.penalty.plugin_c = number(e, "plugin_c")?;
    }
    if let Some(e) = entries.get("plugin_gamma") {
        estimation.penalty.plugin_gamma_numerator = number(e, "plugin_gamma")?;
    }
    if let Some(e) = entries.get("initial_sigma_regressors") {
        estimation.penalty.initial_sigma_regressors = number(e, "initial_sigma_regressors")?;
    }
    if let Some(e) = entries.get("cross_fit_folds") {
        estimation.cross_fit_folds = match e.value.to_ascii_lowercase().as_str() {
            "none" | "off" | "0" => None,
            _ => Some(number(e, "cross_fit_folds")?),
        };
    }
    if let Some(e) = entries.get("intercept") {
        estimation.intercept = boolean(e, "intercept")?;
    }
    if let Some(e) = entries.get("naive_selection_includes_d") {
        estimation.naive_selection = if e.value.eq_ignore_ascii_case("unpenalized") {
            NaiveSelection::UnpenalizedD
        } else if boolean(e, "naive_selection_includes_d")? {
            NaiveSelection::PenalizedD
        } else {
            NaiveSelection::ExcludeD
        };
    }
    if let Some(e) = entries.get("first_stage") {
        estimation.first_stage = match e.value.to_ascii_lowercase().as_str() {
            "post_lasso" | "postlasso" => FirstStage::PostLasso,
            "ols" => FirstStage::Ols,
            _ => {
                return Err(parse_err(
                    e.line,
                    format!("first_stage: expected post_lasso or ols, got {:?}", e.value),
                ))
            }
        };
    }

    let cfg = ScenarioConfig {
        n_train: number(req("n_train"), "n_train")?,
        n_holdout: number(req("n_holdout"), "n_holdout")?,
        p,
        c: number(req("c"), "c")?,
        alpha: number(req("alpha"), "alpha")?,
        beta: sparse_vector(req("beta_nonzero"), "beta_nonzero", p)?,
        gamma: sparse_vector(req("gamma_nonzero"), "gamma_nonzero", p)?,
        sigma_eps: number(req("sigma_eps"), "sigma_eps")?,
        sigma_nu: number(req("sigma_nu"), "sigma_nu")?,
        replications: number(req("replications"), "replications")?,
        master_seed: number(req("master_seed"), "master_seed")?,
        estimation,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn sparse_text(v: &[f64]) -> String {
    v.iter()
        .enumerate()
        .filter(|(_, x)| **x != 0.0)
        .map(|(i, x)| format!("{}:{x:?}", i + 1))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Render a config in the file format. Floats use Rust's shortest
/// round-trip representation, so [`parse_config`] recovers it exactly.
pub fn serialize_config(cfg: &ScenarioConfig) -> String {
    let est = &cfg.estimation;
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    put("n_train", cfg.n_train.to_string());
    put("n_holdout", cfg.n_holdout.to_string());
    put("p", cfg.p.to_string());
    put("c", format!("{:?}", cfg.c));
    put("alpha", format!("{:?}", cfg.alpha));
    put("sigma_eps", format!("{:?}", cfg.sigma_eps));
    put("sigma_nu", format!("{:?}", cfg.sigma_nu));
    put("replications", cfg.replications.to_string());
    put("master_seed", cfg.master_seed.to_string());
    put("beta_nonzero", sparse_text(&cfg.beta));
    put("gamma_nonzero", sparse_text(&cfg.gamma));
    put(
        "penalty_method",
        match est.penalty.method {
            PenaltyMethod::PluginIterated => "plugin".to_string(),
            PenaltyMethod::FixedValue => format!("fixed:{:?}", est.penalty.lambda),
            PenaltyMethod::CrossValidated { folds } => format!("cv:{folds}"),
        },
    );
    put("plugin_c", format!("{:?}", est.penalty.plugin_c));
    put("plugin_gamma", format!("{:?}", est.penalty.plugin_gamma_numerator));
    put(
        "initial_sigma_regressors",
        est.penalty.initial_sigma_regressors.to_string(),
    );
    put(
        "cross_fit_folds",
        est.cross_fit_folds
            .map_or_else(|| "none".to_string(), |k| k.to_string()),
    );
    put("intercept", est.intercept.to_string());
    put(
        "naive_selection_includes_d",
        match est.naive_selection {
            NaiveSelection::ExcludeD => "false",
            NaiveSelection::PenalizedD => "true",
            NaiveSelection::UnpenalizedD => "unpenalized",
        }
        .to_string(),
    );
    put(
        "first_stage",
        match est.first_stage {
            FirstStage::PostLasso => "post_lasso",
            FirstStage::Ols => "ols",
        }
        .to_string(),
    );
    out
}

/// Fields outside the file format are reset to their defaults, which is
/// what a parse of the serialized text produces.
pub fn normalized(cfg: &ScenarioConfig) -> ScenarioConfig {
    let mut out = cfg.clone();
    let keep = cfg.estimation.penalty;
    out.estimation.penalty = PenaltyPlan {
        method: keep.method,
        lambda: if keep.method == PenaltyMethod::FixedValue {
            keep.lambda
        } else {
            0.0
        },
        plugin_c: keep.plugin_c,
        plugin_gamma_numerator: keep.plugin_gamma_numerator,
        initial_sigma_regressors: keep.initial_sigma_regressors,
        ..PenaltyPlan::default()
    };
    out
}
