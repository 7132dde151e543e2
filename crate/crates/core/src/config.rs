//! Cluster configuration: the endpoint roster plus the routing constants.
//!
//! Configs load from a plain-text key/value file. Lines are
//! whitespace-separated, `#` starts a comment, unknown keys are rejected:
//!
//! ```text
//! # cluster config
//! alpha 0.7
//! retry_cap 10
//! concurrency 8
//! rng_seed 42
//! epsilon_q 0.001
//! policy laar
//! model granite3.1-2b 0.0003 caps/granite3.1-2b.caps
//! model phi3-mini 0.0005 caps/phi3-mini.caps
//! ```
//!
//! `model` lines take `<id> <seconds_per_token> <capability_file>` with an
//! optional trailing initial queued-token count. Capability paths are
//! resolved relative to the config file's directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::capability::{self, CapabilityError};
use crate::policy::PolicyKind;
use crate::types::{EndpointState, ModelProfile};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {source_name} line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("invalid config: {0}")]
    Validation(String),
    #[error(transparent)]
    Capability(#[from] CapabilityError),
}

/// One `model` line: everything needed to build a [`ModelProfile`] once the
/// capability file is loaded.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub model_id: String,
    pub seconds_per_token: f64,
    pub capability_path: PathBuf,
    pub initial_queued_tokens: u64,
}

/// Parsed config before capability files are read. The service keeps this
/// form so a missing coefficient file degrades health instead of aborting
/// the parse.
#[derive(Clone, Debug)]
pub struct RawClusterConfig {
    pub models: Vec<ModelSpec>,
    pub alpha: f64,
    pub retry_cap: u32,
    pub concurrency: u32,
    pub rng_seed: u64,
    pub epsilon_q: f64,
    pub policy: PolicyKind,
}

impl Default for RawClusterConfig {
    fn default() -> Self {
        RawClusterConfig {
            models: Vec::new(),
            alpha: 0.7,
            retry_cap: 10,
            concurrency: 8,
            rng_seed: 0,
            epsilon_q: 1e-3,
            policy: PolicyKind::Laar,
        }
    }
}

/// Fully resolved cluster configuration with capability models loaded.
#[derive(Clone, Debug)]
pub struct ClusterConfig {
    pub endpoints: Vec<(ModelProfile, EndpointState)>,
    /// Queue-impact constant in the latency estimate.
    pub alpha: f64,
    /// Maximum attempts per request.
    pub retry_cap: u32,
    /// Concurrent client streams in the simulator.
    pub concurrency: u32,
    pub rng_seed: u64,
    /// Floor for predicted success probability.
    pub epsilon_q: f64,
    pub policy: PolicyKind,
}

impl ClusterConfig {
    pub fn model_ids(&self) -> Vec<&str> {
        self.endpoints
            .iter()
            .map(|(p, _)| p.model_id.as_str())
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.endpoints.is_empty() {
            return Err(ConfigError::Validation("no endpoints configured".into()));
        }
        if self.retry_cap < 1 {
            return Err(ConfigError::Validation("retry_cap must be >= 1".into()));
        }
        if self.concurrency < 1 {
            return Err(ConfigError::Validation("concurrency must be >= 1".into()));
        }
        if !(self.epsilon_q > 0.0 && self.epsilon_q < 1.0) {
            return Err(ConfigError::Validation(format!(
                "epsilon_q must be in (0, 1), got {}",
                self.epsilon_q
            )));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(ConfigError::Validation(format!(
                "alpha must be a finite nonnegative number, got {}",
                self.alpha
            )));
        }
        let mut seen = BTreeSet::new();
        for (profile, state) in &self.endpoints {
            if profile.model_id != state.model_id {
                return Err(ConfigError::Validation(format!(
                    "endpoint profile `{}` paired with state `{}`",
                    profile.model_id, state.model_id
                )));
            }
            if !seen.insert(profile.model_id.as_str()) {
                return Err(ConfigError::Validation(format!(
                    "duplicate model id `{}`",
                    profile.model_id
                )));
            }
        }
        Ok(())
    }
}

impl RawClusterConfig {
    /// Loads every capability file and produces a validated [`ClusterConfig`].
    pub fn resolve(&self) -> Result<ClusterConfig, ConfigError> {
        let mut endpoints = Vec::with_capacity(self.models.len());
        for spec in &self.models {
            let capability = capability::load_model(&spec.capability_path)?;
            let profile = ModelProfile::new(&spec.model_id, spec.seconds_per_token, capability)
                .map_err(ConfigError::Validation)?;
            let state = EndpointState {
                model_id: spec.model_id.clone(),
                queued_tokens: spec.initial_queued_tokens,
            };
            endpoints.push((profile, state));
        }
        let config = ClusterConfig {
            endpoints,
            alpha: self.alpha,
            retry_cap: self.retry_cap,
            concurrency: self.concurrency,
            rng_seed: self.rng_seed,
            epsilon_q: self.epsilon_q,
            policy: self.policy,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Parses the key/value config format. `base_dir` anchors relative
/// capability paths; `source_name` is only used in error messages.
pub fn parse_cluster_config(
    text: &str,
    source_name: &str,
    base_dir: &Path,
) -> Result<RawClusterConfig, ConfigError> {
    let mut config = RawClusterConfig::default();
    let parse_err = |line: usize, message: String| ConfigError::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };

    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        let single = |rest: &[&str]| -> Result<String, ConfigError> {
            if rest.len() != 1 {
                return Err(parse_err(
                    line_no,
                    format!("`{key}` expects exactly one value"),
                ));
            }
            Ok(rest[0].to_string())
        };
        match key {
            "alpha" => {
                config.alpha = single(&rest)?
                    .parse()
                    .map_err(|_| parse_err(line_no, "alpha must be a number".into()))?;
            }
            "epsilon_q" => {
                config.epsilon_q = single(&rest)?
                    .parse()
                    .map_err(|_| parse_err(line_no, "epsilon_q must be a number".into()))?;
            }
            "retry_cap" => {
                config.retry_cap = single(&rest)?.parse().map_err(|_| {
                    parse_err(line_no, "retry_cap must be a positive integer".into())
                })?;
            }
            "concurrency" => {
                config.concurrency = single(&rest)?.parse().map_err(|_| {
                    parse_err(line_no, "concurrency must be a positive integer".into())
                })?;
            }
            "rng_seed" => {
                config.rng_seed = single(&rest)?
                    .parse()
                    .map_err(|_| parse_err(line_no, "rng_seed must be a 64-bit integer".into()))?;
            }
            "policy" => {
                config.policy = single(&rest)?
                    .parse()
                    .map_err(|e: String| parse_err(line_no, e))?;
            }
            "model" => {
                if rest.len() < 3 || rest.len() > 4 {
                    return Err(parse_err(
                        line_no,
                        "`model` expects <id> <seconds_per_token> <capability_file> [initial_queued]"
                            .into(),
                    ));
                }
                let seconds_per_token: f64 = rest[1]
                    .parse()
                    .map_err(|_| parse_err(line_no, "seconds_per_token must be a number".into()))?;
                let initial_queued_tokens = if rest.len() == 4 {
                    rest[3].parse().map_err(|_| {
                        parse_err(line_no, "initial queued tokens must be an integer".into())
                    })?
                } else {
                    0
                };
                config.models.push(ModelSpec {
                    model_id: rest[0].to_string(),
                    seconds_per_token,
                    capability_path: base_dir.join(rest[2]),
                    initial_queued_tokens,
                });
            }
            other => {
                return Err(parse_err(line_no, format!("unknown key `{other}`")));
            }
        }
    }
    Ok(config)
}

/// Reads and parses a config file.
pub fn load_raw_config(path: &Path) -> Result<RawClusterConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    parse_cluster_config(&text, &path.display().to_string(), base_dir)
}

/// Reads, parses, resolves, and validates a config file in one step.
pub fn load_cluster_config(path: &Path) -> Result<ClusterConfig, ConfigError> {
    load_raw_config(path)?.resolve()
}
