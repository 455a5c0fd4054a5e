//! Run configuration: command-line values over environment variables over a
//! TOML file over built-in defaults.
//!
//! Flag and environment values arrive together as [`Overrides`] (the CLI
//! parser already prefers a flag to its variable); this module layers them on
//! the file and the defaults and validates the result.

use std::path::Path;

use serde::Deserialize;
use webnav_core::action::is_absolute_url;
use webnav_core::alignment::{LossMode, DEFAULT_BETA, DEFAULT_LAMBDA, DEFAULT_SFT_WEIGHT};
use webnav_core::episode::DEFAULT_MAX_STEPS;
use webnav_core::observation::DEFAULT_HISTORY_CAP;
use webnav_core::pruner::{PruneError, PrunerConfig};

use crate::formats::{read_to_string, FormatError};
use crate::policy::DEFAULT_MAX_TOKENS;

pub const ENV_CONFIG: &str = "WEBNAV_CONFIG";
pub const ENV_POLICY_URL: &str = "WEBNAV_POLICY_URL";
pub const ENV_POLICY_TOKEN: &str = "WEBNAV_POLICY_TOKEN";
pub const ENV_WEBDRIVER_URL: &str = "WEBDRIVER_URL";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Read(#[from] FormatError),
    #[error("{path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("{field} must be an absolute http(s) URL, got {value:?}")]
    NotAbsolute { field: &'static str, value: String },
    #[error("pruner: {0}")]
    Pruner(#[from] PruneError),
    #[error("{0}")]
    Range(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LossModeName {
    /// λ·DPO + SFT
    WeightedDpo,
    /// DPO + w·SFT
    WeightedSft,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PrunerSection {
    pub d: Option<usize>,
    pub mc: Option<usize>,
    pub ms: Option<usize>,
    pub rcc: Option<usize>,
    pub reseed: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub mode: Option<LossModeName>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub sft_weight: Option<f64>,
}

/// The TOML file, and also the shape of command-line overrides.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub policy_url: Option<String>,
    pub policy_token: Option<String>,
    pub max_tokens: Option<u32>,
    pub webdriver_url: Option<String>,
    pub max_steps: Option<usize>,
    pub history_cap: Option<usize>,
    pub workers: Option<usize>,
    pub pruner: PrunerSection,
    pub loss: LossSection,
}

macro_rules! layer {
    ($dst:expr, $src:expr; $($field:ident),*) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl Overrides {
    /// Values present in `over` replace those in `self`.
    pub fn layer(mut self, over: &Overrides) -> Overrides {
        layer!(self, over; policy_url, policy_token, max_tokens, webdriver_url, max_steps, history_cap, workers);
        layer!(self.pruner, over.pruner; d, mc, ms, rcc, reseed);
        layer!(self.loss, over.loss; mode, beta, lambda, sft_weight);
        self
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Overrides, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_owned(),
            detail: e.to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Overrides, ConfigError> {
        Overrides::from_toml(&read_to_string(path)?, &path.display().to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub policy_url: Option<String>,
    pub policy_token: Option<String>,
    pub max_tokens: u32,
    pub webdriver_url: Option<String>,
    pub max_steps: usize,
    pub history_cap: usize,
    pub workers: usize,
    pub pruner: PrunerConfig,
    pub beta: f64,
    pub loss: LossMode,
}

fn url(field: &'static str, value: Option<String>) -> Result<Option<String>, ConfigError> {
    match value {
        Some(v) if !(is_absolute_url(&v) && (v.starts_with("http://") || v.starts_with("https://"))) => {
            Err(ConfigError::NotAbsolute { field, value: v })
        }
        other => Ok(other),
    }
}

fn weight(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::Range(format!(
            "{name} must be finite and non-negative, got {v}"
        )))
    }
}

impl Config {
    /// Fills gaps in `merged` with defaults and validates.
    pub fn resolve(merged: Overrides) -> Result<Config, ConfigError> {
        let defaults = PrunerConfig::default();
        let p = &merged.pruner;
        let pruner = PrunerConfig {
            max_depth: p.d.unwrap_or(defaults.max_depth),
            max_children: p.mc.unwrap_or(defaults.max_children),
            max_siblings: p.ms.unwrap_or(defaults.max_siblings),
            recursion_count: p.rcc.unwrap_or(defaults.recursion_count),
            reseed: p.reseed.unwrap_or(false),
            ..defaults
        };
        pruner.validate()?;

        let beta = merged.loss.beta.unwrap_or(DEFAULT_BETA);
        if !(beta.is_finite() && beta > 0.0) {
            return Err(ConfigError::Range(format!(
                "beta must be finite and positive, got {beta}"
            )));
        }
        let loss = match merged.loss.mode.unwrap_or(LossModeName::WeightedDpo) {
            LossModeName::WeightedDpo => LossMode::WeightedDpo {
                lambda: weight("lambda", merged.loss.lambda.unwrap_or(DEFAULT_LAMBDA))?,
            },
            LossModeName::WeightedSft => LossMode::WeightedSft {
                weight: weight("sft_weight", merged.loss.sft_weight.unwrap_or(DEFAULT_SFT_WEIGHT))?,
            },
        };

        let workers = merged.workers.unwrap_or(1);
        if workers == 0 {
            return Err(ConfigError::Range("workers must be at least 1".into()));
        }
        let max_steps = merged.max_steps.unwrap_or(DEFAULT_MAX_STEPS);
        if max_steps == 0 {
            return Err(ConfigError::Range("max_steps must be at least 1".into()));
        }

        Ok(Config {
            policy_url: url("policy_url", merged.policy_url)?,
            policy_token: merged.policy_token.filter(|t| !t.is_empty()),
            max_tokens: merged.max_tokens.unwrap_or(DEFAULT_MAX_TOKENS),
            webdriver_url: url("webdriver_url", merged.webdriver_url)?,
            max_steps,
            history_cap: merged.history_cap.unwrap_or(DEFAULT_HISTORY_CAP),
            workers,
            pruner,
            beta,
            loss,
        })
    }

    /// `file` (if any) under `cli`.
    pub fn load(file: Option<&Path>, cli: &Overrides) -> Result<Config, ConfigError> {
        let base = match file {
            Some(path) => Overrides::from_file(path)?,
            None => Overrides::default(),
        };
        Config::resolve(base.layer(cli))
    }
}

impl Default for Config {
    fn default() -> Self {
        Config::resolve(Overrides::default()).expect("defaults are valid")
    }
}
