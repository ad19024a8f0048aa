//! Service configuration: a JSON file whose keys all have defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use feedwarden_core::graph::{GraphParams, TransitionMode};
use feedwarden_core::pipeline::PipelineConfig;
use feedwarden_core::profile::DecayParams;

pub const CONFIG_ENV: &str = "FEEDWARDEN_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid config value for `{key}`: {message}")]
    Validation { key: String, message: String },
}

impl ConfigError {
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Validation { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Fixture-driven stubs; no network.
    #[default]
    Offline,
    /// Remote HTTP+JSON providers.
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    #[default]
    Scripted,
    Replay,
    Keyword,
    AllPass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Offline judge stub.
    pub judge: JudgeKind,
    pub vision_url: Option<String>,
    pub judge_url: Option<String>,
    pub intent_url: Option<String>,
    pub dispute_url: Option<String>,
    /// When unset the hashing embedder is used even in http mode.
    pub embedding_url: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Offline,
            judge: JudgeKind::Scripted,
            vision_url: None,
            judge_url: None,
            intent_url: None,
            dispute_url: None,
            embedding_url: None,
            timeout_ms: 30_000,
            retries: 1,
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: feedwarden_core::embedding::DEFAULT_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageConfig {
    pub root: PathBuf,
    /// Rewrite a user's state log after this many records.
    pub compact_every: usize,
}

impl Default for StorageConfig {
    fn default() -> Self {
        StorageConfig {
            root: PathBuf::from("data"),
            compact_every: 256,
        }
    }
}

/// Fixture files for the offline backends. Relative paths resolve against
/// the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    /// JSON object: image_ref → visual evidence.
    pub evidence: Option<PathBuf>,
    /// Directory of `<image_ref>.txt` captions.
    pub captions: Option<PathBuf>,
    /// JSON array of `{token, rule_id}` triggers.
    pub judge_script: Option<PathBuf>,
    /// Recorded verdicts for the replay judge.
    pub replay: Option<PathBuf>,
    /// JSON array of `[keyword, proposal]` pairs.
    pub intents: Option<PathBuf>,
    /// JSON array of dispute scripts.
    pub disputes: Option<PathBuf>,
    /// JSON array of rule drafts used by offline evaluation.
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub tau_clip: f64,
    pub tau_e: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub star_one: f64,
    pub star_two: f64,
    pub star_k: usize,
    pub epsilon_delta: f64,
    pub audit_all: bool,
    pub transition: TransitionMode,
    /// Pins the service clock to this instant (ms since epoch) so that
    /// timestamps and latencies are reproducible. Unset means wall clock.
    pub frozen_clock_ms: Option<i64>,
    pub listen: String,
    pub backend: BackendConfig,
    pub embedding: EmbeddingConfig,
    pub storage: StorageConfig,
    pub fixtures: FixtureConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        let graph = GraphParams::default();
        let decay = DecayParams::default();
        ServiceConfig {
            tau_clip: pipeline.tau_clip,
            tau_e: graph.edge_threshold,
            alpha: graph.damping,
            gamma: decay.gamma,
            star_one: pipeline.star_one,
            star_two: pipeline.star_two,
            star_k: pipeline.star_k,
            epsilon_delta: decay.epsilon,
            audit_all: pipeline.audit_all,
            transition: graph.transition,
            frozen_clock_ms: None,
            listen: "127.0.0.1:8080".into(),
            backend: BackendConfig::default(),
            embedding: EmbeddingConfig::default(),
            storage: StorageConfig::default(),
            fixtures: FixtureConfig::default(),
        }
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        key: key.to_string(),
        message: message.into(),
    }
}

impl ServiceConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            tau_clip: self.tau_clip,
            star_one: self.star_one,
            star_two: self.star_two,
            star_k: self.star_k,
            audit_all: self.audit_all,
        }
    }

    pub fn graph(&self) -> GraphParams {
        GraphParams {
            damping: self.alpha,
            edge_threshold: self.tau_e,
            transition: self.transition,
        }
    }

    pub fn decay(&self) -> DecayParams {
        DecayParams {
            gamma: self.gamma,
            epsilon: self.epsilon_delta,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |key: &str, v: f64| {
            if v.is_finite() && (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(key, format!("{v} is outside [0, 1]")))
            }
        };
        let open_unit = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(invalid(key, format!("{v} is outside (0, 1)")))
            }
        };
        unit("tau_clip", self.tau_clip)?;
        unit("tau_e", self.tau_e)?;
        open_unit("alpha", self.alpha)?;
        open_unit("gamma", self.gamma)?;
        unit("star_one", self.star_one)?;
        unit("star_two", self.star_two)?;
        if self.star_two < self.star_one {
            return Err(invalid("star_two", "must be at least star_one"));
        }
        if self.star_k == 0 {
            return Err(invalid("star_k", "must be positive"));
        }
        open_unit("epsilon_delta", self.epsilon_delta)?;
        if self.embedding.dim == 0 {
            return Err(invalid("embedding.dim", "must be positive"));
        }
        if self.backend.timeout_ms == 0 {
            return Err(invalid("backend.timeout_ms", "must be positive"));
        }
        if self.backend.max_in_flight == 0 {
            return Err(invalid("backend.max_in_flight", "must be positive"));
        }
        if self.storage.compact_every == 0 {
            return Err(invalid("storage.compact_every", "must be positive"));
        }
        if self.backend.kind == BackendKind::Http {
            for (key, url) in [
                ("backend.vision_url", &self.backend.vision_url),
                ("backend.judge_url", &self.backend.judge_url),
            ] {
                if url.as_deref().is_none_or(str::is_empty) {
                    return Err(invalid(key, "required when backend.kind is http"));
                }
            }
        }
        Ok(())
    }

    /// Resolves relative fixture and storage paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        let f = &mut self.fixtures;
        for p in [
            &mut f.evidence,
            &mut f.captions,
            &mut f.judge_script,
            &mut f.replay,
            &mut f.intents,
            &mut f.disputes,
            &mut f.rules,
        ] {
            fix(p);
        }
        if self.storage.root.is_relative() {
            self.storage.root = base.join(&self.storage.root);
        }
    }
}

/// Parses config text. Blank input yields the defaults.
pub fn parse_config(text: &str) -> Result<ServiceConfig, ConfigError> {
    let config: ServiceConfig = if text.trim().is_empty() {
        ServiceConfig::default()
    } else {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ServiceConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = parse_config(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    config.resolve_paths(base);
    Ok(config)
}
