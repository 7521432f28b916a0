//! Run configuration: a single TOML file plus flag overrides. Secrets only
//! ever travel through environment variables named here.

use std::path::{Path, PathBuf};

use autoprov_core::embed::{EmbeddingProvider, HashEmbedder, RemoteEmbedder};
use autoprov_core::llm::{ChatProvider, ChatProviderConfig, HttpChatProvider, ScriptedResponder};
use autoprov_core::types::TimestampFormat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {cause}")]
    Unreadable { path: PathBuf, cause: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub cpe: CpeStageConfig,
    #[serde(default)]
    pub rules: RulesConfig,
    #[serde(default)]
    pub enrich: EnrichConfig,
    #[serde(default)]
    pub detect: DetectConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub timestamps: TimestampsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct PathsConfig {
    /// Main log stream: plain text (one entry per line) or LogRecord JSONL.
    pub input_logs: PathBuf,
    /// Benign stream for detector fitting; optional.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benign_logs: Option<PathBuf>,
    pub database_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Ground-truth files from the corpus generator, consumed by eval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_types: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_nodes: Option<PathBuf>,
    /// Manual label preload for the functionality database.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Scripted,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_platform")]
    pub platform: String,
    /// Scripted judge scripts; defaults to the main script when empty.
    #[serde(default)]
    pub judge_scripts: Vec<PathBuf>,
}

fn default_api_key_env() -> String {
    "AUTOPROV_API_KEY".to_string()
}
fn default_retry_limit() -> u32 {
    2
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_platform() -> String {
    "generic system".to_string()
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            mode: ProviderMode::Scripted,
            script_path: None,
            endpoint_url: None,
            model_name: None,
            api_key_env: default_api_key_env(),
            retry_limit: default_retry_limit(),
            timeout_ms: default_timeout_ms(),
            platform: default_platform(),
            judge_scripts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    Builtin,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub mode: EmbeddingMode,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
}

fn default_dimension() -> usize {
    autoprov_core::embed::DEFAULT_DIM
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            mode: EmbeddingMode::Builtin,
            dimension: default_dimension(),
            endpoint_url: None,
            model_name: None,
            api_key_env: default_api_key_env(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub radius: f64,
    pub decay: f64,
    pub min_weight: f64,
    pub k: usize,
    pub m: usize,
    pub window_size: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            radius: 0.3,
            decay: 0.0,
            min_weight: 0.5,
            k: 32,
            m: 3,
            window_size: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CpeStageConfig {
    pub n_votes: usize,
    pub pool_capacity: usize,
    pub pool_sample: usize,
}

impl Default for CpeStageConfig {
    fn default() -> Self {
        CpeStageConfig {
            n_votes: 7,
            pool_capacity: 8,
            pool_sample: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RulesConfig {
    pub max_repair: u32,
}

impl Default for RulesConfig {
    fn default() -> Self {
        RulesConfig { max_repair: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrichConfig {
    pub max_sweeps: usize,
}

impl Default for EnrichConfig {
    fn default() -> Self {
        EnrichConfig { max_sweeps: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectConfig {
    pub n_seed: usize,
    /// External score CSV overriding the built-in detector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores_csv: Option<PathBuf>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            n_seed: 10,
            scores_csv: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub rates: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rates: vec![0.0, 25.0, 50.0, 75.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimestampsConfig {
    pub formats: Vec<TimestampFormat>,
}

impl Default for TimestampsConfig {
    fn default() -> Self {
        TimestampsConfig {
            formats: vec![TimestampFormat::Iso8601, TimestampFormat::UnixSeconds],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.to_path_buf(),
            cause: e.to_string(),
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.paths.input_logs.exists() {
            return Err(ConfigError::Invalid(format!(
                "input_logs not found: {}",
                self.paths.input_logs.display()
            )));
        }
        if let Some(benign) = &self.paths.benign_logs {
            if !benign.exists() {
                return Err(ConfigError::Invalid(format!(
                    "benign_logs not found: {}",
                    benign.display()
                )));
            }
        }
        match self.provider.mode {
            ProviderMode::Scripted => {
                let Some(script) = &self.provider.script_path else {
                    return Err(ConfigError::Invalid(
                        "scripted provider needs script_path".to_string(),
                    ));
                };
                if !script.exists() {
                    return Err(ConfigError::Invalid(format!(
                        "script not found: {}",
                        script.display()
                    )));
                }
            }
            ProviderMode::Http => {
                if self.provider.endpoint_url.is_none() || self.provider.model_name.is_none() {
                    return Err(ConfigError::Invalid(
                        "http provider needs endpoint_url and model_name".to_string(),
                    ));
                }
            }
        }
        if self.cpe.n_votes == 0 || self.cpe.n_votes % 2 == 0 {
            return Err(ConfigError::Invalid(format!(
                "n_votes must be odd and positive, got {}",
                self.cpe.n_votes
            )));
        }
        if self.cluster.k == 0 || self.cluster.m == 0 || self.cluster.window_size == 0 {
            return Err(ConfigError::Invalid(
                "cluster k, m, and window_size must be positive".to_string(),
            ));
        }
        if self.detect.n_seed == 0 {
            return Err(ConfigError::Invalid("n_seed must be positive".to_string()));
        }
        for rate in &self.eval.rates {
            if !(0.0..=100.0).contains(rate) {
                return Err(ConfigError::Invalid(format!(
                    "poisoning rate {rate} outside [0, 100]"
                )));
            }
        }
        Ok(())
    }

    pub fn build_chat_provider(&self) -> Result<Box<dyn ChatProvider>, ConfigError> {
        match self.provider.mode {
            ProviderMode::Scripted => {
                let script = self.provider.script_path.as_ref().expect("validated");
                let responder = ScriptedResponder::from_path(script)
                    .map_err(|e| ConfigError::Invalid(format!("script load failed: {e}")))?;
                Ok(Box::new(responder))
            }
            ProviderMode::Http => Ok(Box::new(HttpChatProvider::new(ChatProviderConfig {
                endpoint_url: self.provider.endpoint_url.clone().expect("validated"),
                model_name: self.provider.model_name.clone().expect("validated"),
                api_key_env: self.provider.api_key_env.clone(),
                retry_limit: self.provider.retry_limit,
                timeout_ms: self.provider.timeout_ms,
            }))),
        }
    }

    /// Judges: configured scripts, padded with the main provider's script.
    pub fn build_judges(&self) -> Result<Vec<Box<dyn ChatProvider>>, ConfigError> {
        let mut judges: Vec<Box<dyn ChatProvider>> = Vec::new();
        for path in &self.provider.judge_scripts {
            judges.push(Box::new(ScriptedResponder::from_path(path).map_err(
                |e| ConfigError::Invalid(format!("judge script load failed: {e}")),
            )?));
        }
        while judges.len() < 3 {
            judges.push(self.build_chat_provider()?);
        }
        judges.truncate(3);
        Ok(judges)
    }

    pub fn build_embedder(&self) -> Result<Box<dyn EmbeddingProvider>, ConfigError> {
        match self.embedding.mode {
            EmbeddingMode::Builtin => Ok(Box::new(HashEmbedder::new(self.embedding.dimension))),
            EmbeddingMode::Http => Ok(Box::new(RemoteEmbedder {
                endpoint_url: self
                    .embedding
                    .endpoint_url
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("http embedding needs endpoint_url".into()))?,
                model_name: self
                    .embedding
                    .model_name
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("http embedding needs model_name".into()))?,
                api_key_env: self.embedding.api_key_env.clone(),
                dimension: self.embedding.dimension,
                timeout_ms: self.provider.timeout_ms,
            })),
        }
    }

    pub fn cpe_config(&self) -> autoprov_core::cpe::CpeConfig {
        autoprov_core::cpe::CpeConfig {
            platform: self.provider.platform.clone(),
            n_votes: self.cpe.n_votes,
            pool_capacity: self.cpe.pool_capacity,
            pool_sample: self.cpe.pool_sample,
            rng_seed: self.seed,
            ts_formats: self.timestamps.formats.clone(),
        }
    }
}
