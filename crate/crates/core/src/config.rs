//! Experiment configuration.
//!
//! One TOML file pins every knob of a run — backend endpoints and models,
//! candidate count, query counts, seeds, temperatures, method list, and
//! the dataset manifest — so each results file can state exactly how it
//! was produced. CLI flags may override a few fields; the effective
//! config is what gets echoed into the records header.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    CachedBackend, CompletionBackend, DiskCache, HttpBackend, HttpBackendConfig, RetryPolicy,
    ScriptedBackend, Throttled,
};
use crate::types::{Dataset, Method};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub dataset: DatasetSection,
    pub backend: BackendSection,
    /// Optional separate backend for discriminative and
    /// consistency-selection queries; defaults to `backend`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discriminator: Option<BackendSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub name: String,
    #[serde(default = "defaults::runs")]
    pub runs: u32,
    /// Candidates sampled per problem (labels allow 2..=26).
    #[serde(default = "defaults::k")]
    pub k: usize,
    /// Discriminative queries per mode per problem.
    #[serde(default = "defaults::n_queries")]
    pub n_queries: usize,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::methods")]
    pub methods: Vec<Method>,
    /// Problem-level worker pool width.
    #[serde(default = "defaults::workers")]
    pub workers: usize,
    /// Sampling temperature for candidate generation.
    #[serde(default = "defaults::gen_temperature")]
    pub gen_temperature: f64,
    /// Temperature for discriminative and consistency-selection queries.
    #[serde(default)]
    pub judge_temperature: f64,
    #[serde(default = "defaults::max_tokens")]
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSection {
    pub kind: Dataset,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// OpenAI-compatible chat completions endpoint.
    Openai,
    /// Deterministic scripted table loaded from a JSON file.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default = "defaults::api_key_env")]
    pub api_key_env: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Per-batch fan-out width.
    #[serde(default = "defaults::parallelism")]
    pub parallelism: usize,
    /// Global in-flight request cap across all workers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_in_flight: Option<usize>,
    #[serde(default = "defaults::retry_attempts")]
    pub retry_attempts: u32,
    #[serde(default = "defaults::retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default = "defaults::request_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_path: Option<PathBuf>,
}

mod defaults {
    use crate::types::Method;

    pub fn runs() -> u32 {
        3
    }
    pub fn k() -> usize {
        5
    }
    pub fn n_queries() -> usize {
        3
    }
    pub fn seed() -> u64 {
        42
    }
    pub fn methods() -> Vec<Method> {
        Method::ALL.to_vec()
    }
    pub fn workers() -> usize {
        4
    }
    pub fn gen_temperature() -> f64 {
        0.7
    }
    pub fn max_tokens() -> u32 {
        1024
    }
    pub fn api_key_env() -> String {
        "OPENAI_API_KEY".to_string()
    }
    pub fn parallelism() -> usize {
        4
    }
    pub fn retry_attempts() -> u32 {
        5
    }
    pub fn retry_base_ms() -> u64 {
        1000
    }
    pub fn request_timeout_ms() -> u64 {
        120_000
    }
}

impl ExperimentConfig {
    /// Parses a config file and resolves its relative paths against the
    /// file's own directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: ExperimentConfig =
            toml::from_str(&raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.dataset.path);
        for section in std::iter::once(&mut self.backend).chain(self.discriminator.iter_mut()) {
            if let Some(script) = &mut section.script_path {
                resolve(script);
            }
            if let Some(cache) = &mut section.cache_dir {
                resolve(cache);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let exp = &self.experiment;
        if !(2..=26).contains(&exp.k) {
            return Err(ConfigError::Invalid(format!(
                "k = {} outside 2..=26",
                exp.k
            )));
        }
        if exp.runs == 0 {
            return Err(ConfigError::Invalid("runs must be >= 1".into()));
        }
        if exp.n_queries == 0 {
            return Err(ConfigError::Invalid("n_queries must be >= 1".into()));
        }
        if exp.methods.is_empty() {
            return Err(ConfigError::Invalid("methods list is empty".into()));
        }
        for temp in [exp.gen_temperature, exp.judge_temperature] {
            if !(0.0..=2.0).contains(&temp) {
                return Err(ConfigError::Invalid(format!(
                    "temperature {temp} outside [0, 2]"
                )));
            }
        }
        for section in std::iter::once(&self.backend).chain(self.discriminator.iter()) {
            match section.kind {
                BackendKind::Openai => {
                    if section.base_url.is_none() {
                        return Err(ConfigError::Invalid(
                            "openai backend requires base_url".into(),
                        ));
                    }
                }
                BackendKind::Scripted => {
                    if section.script_path.is_none() {
                        return Err(ConfigError::Invalid(
                            "scripted backend requires script_path".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Constructs the generator and discriminator backends. When no
    /// separate discriminator is configured both handles share one
    /// instance (and one cache and throttle).
    pub fn build_backends(
        &self,
    ) -> Result<(Arc<dyn CompletionBackend>, Arc<dyn CompletionBackend>), ConfigError> {
        let generator = build_backend(&self.backend)?;
        let discriminator = match &self.discriminator {
            Some(section) => build_backend(section)?,
            None => generator.clone(),
        };
        Ok((generator, discriminator))
    }
}

fn build_backend(section: &BackendSection) -> Result<Arc<dyn CompletionBackend>, ConfigError> {
    let raw: Arc<dyn CompletionBackend> = match section.kind {
        BackendKind::Openai => {
            let base_url = section.base_url.clone().expect("validated");
            let mut config = HttpBackendConfig::new(base_url);
            config.api_key = std::env::var(&section.api_key_env).ok();
            config.id = section.id.clone();
            config.retry = RetryPolicy {
                max_attempts: section.retry_attempts,
                base_delay: Duration::from_millis(section.retry_base_ms),
                max_delay: Duration::from_secs(30),
            };
            config.request_timeout = Duration::from_millis(section.request_timeout_ms);
            let backend = HttpBackend::new(config)
                .map_err(|e| ConfigError::Invalid(format!("backend: {e}")))?;
            wrap(backend, section)?
        }
        BackendKind::Scripted => {
            let path = section.script_path.as_ref().expect("validated");
            let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            let id = section.id.clone().unwrap_or_else(|| "scripted".to_string());
            let backend = ScriptedBackend::from_json(&id, &raw)
                .map_err(|e| ConfigError::Parse(format!("script table: {e}")))?;
            wrap(backend, section)?
        }
    };
    Ok(raw)
}

fn wrap<B: CompletionBackend + 'static>(
    backend: B,
    section: &BackendSection,
) -> Result<Arc<dyn CompletionBackend>, ConfigError> {
    // Order: cache outside throttle, so hits skip the in-flight cap.
    match (&section.cache_dir, section.max_in_flight) {
        (Some(dir), Some(cap)) => {
            let cache = DiskCache::new(dir).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Ok(Arc::new(CachedBackend::new(Throttled::new(backend, cap), cache)))
        }
        (Some(dir), None) => {
            let cache = DiskCache::new(dir).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Ok(Arc::new(CachedBackend::new(backend, cache)))
        }
        (None, Some(cap)) => Ok(Arc::new(Throttled::new(backend, cap))),
        (None, None) => Ok(Arc::new(backend)),
    }
}
