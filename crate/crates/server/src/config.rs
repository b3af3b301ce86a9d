//! Runtime settings: defaults, then an optional TOML file, then `SPARQLLM_*`
//! environment variables.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sparqllm_core::embedding::{Embedder, HttpEmbedder, HttpEmbedderConfig, MockEmbedder};
use sparqllm_core::kg_store::OntologySchema;
use sparqllm_core::query_generator::{GenerationConfig, HttpLlm, HttpLlmConfig, LlmGateway, ScriptedLlm};
use sparqllm_core::sparql::SparqlClient;
use sparqllm_core::template_store::{load_templates, EmbeddingMode, IndexParams, TemplateIndex};
use sparqllm_core::vector_index::Metric;
use url::Url;

pub const ENV_PREFIX: &str = "SPARQLLM_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub bind: String,
    pub sparql_endpoint: String,
    pub sparql_timeout_secs: u64,
    /// Replay file for the scripted mock model. Takes precedence over `llm_url`.
    pub llm_replay: Option<PathBuf>,
    pub llm_url: Option<String>,
    pub llm_model: String,
    pub llm_temperature: f64,
    pub llm_timeout_secs: u64,
    /// `mock-<dim>` selects the deterministic mock embedder.
    pub embedding_model: String,
    pub embedding_url: Option<String>,
    pub embedding_dim: Option<usize>,
    pub seed: u64,
    pub templates: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub embedding_mode: EmbeddingMode,
    pub metric: Metric,
    pub nlist: Option<usize>,
    pub nprobe: Option<usize>,
    pub n_templates: usize,
    pub max_attempts: usize,
    pub use_templates: bool,
}

impl Default for Settings {
    fn default() -> Self {
        let generation = GenerationConfig::default();
        let index = IndexParams::default();
        Self {
            bind: "127.0.0.1:8080".into(),
            sparql_endpoint: "http://127.0.0.1:7878/sparql".into(),
            sparql_timeout_secs: 30,
            llm_replay: None,
            llm_url: None,
            llm_model: "default".into(),
            llm_temperature: 0.0,
            llm_timeout_secs: 60,
            embedding_model: "mock-256".into(),
            embedding_url: None,
            embedding_dim: None,
            seed: index.seed,
            templates: None,
            index: None,
            ontology: None,
            embedding_mode: index.mode,
            metric: index.metric,
            nlist: None,
            nprobe: None,
            n_templates: generation.n_templates,
            max_attempts: generation.max_attempts,
            use_templates: generation.use_templates,
        }
    }
}

const KEYS: &[&str] = &[
    "bind",
    "sparql_endpoint",
    "sparql_timeout_secs",
    "llm_replay",
    "llm_url",
    "llm_model",
    "llm_temperature",
    "llm_timeout_secs",
    "embedding_model",
    "embedding_url",
    "embedding_dim",
    "seed",
    "templates",
    "index",
    "ontology",
    "embedding_mode",
    "metric",
    "nlist",
    "nprobe",
    "n_templates",
    "max_attempts",
    "use_templates",
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot build component: {0}")]
    Component(String),
}

impl Settings {
    /// Merges `file` (when given) and then environment variables over the defaults.
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load_with_env(file, |k| std::env::var(k).ok())
    }

    pub fn load_with_env(file: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                text.parse::<toml::Table>().map_err(|e| ConfigError::Invalid(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for key in KEYS {
            if let Some(raw) = env(&format!("{ENV_PREFIX}{}", key.to_ascii_uppercase())) {
                table.insert(key.to_string(), env_value(&raw));
            }
        }
        let settings: Settings = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
        settings.generation().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(settings)
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            max_attempts: self.max_attempts,
            n_templates: self.n_templates,
            use_templates: self.use_templates,
            ..GenerationConfig::default()
        }
    }

    pub fn index_params(&self) -> IndexParams {
        IndexParams {
            mode: self.embedding_mode,
            metric: self.metric,
            nlist: self.nlist,
            nprobe: self.nprobe,
            seed: self.seed,
        }
    }

    pub fn sparql_client(&self) -> Result<SparqlClient, ConfigError> {
        let url = parse_url("sparql_endpoint", &self.sparql_endpoint)?;
        Ok(SparqlClient::with_timeout(url, Duration::from_secs(self.sparql_timeout_secs)))
    }

    pub fn embedder(&self) -> Result<Arc<dyn Embedder>, ConfigError> {
        if self.embedding_model.starts_with("mock-") {
            let e = MockEmbedder::from_model_id(&self.embedding_model, self.seed)
                .map_err(|e| ConfigError::Component(e.to_string()))?;
            return Ok(Arc::new(e));
        }
        let (Some(url), Some(dim)) = (&self.embedding_url, self.embedding_dim) else {
            return Err(ConfigError::Invalid(format!(
                "embedding model '{}' needs embedding_url and embedding_dim",
                self.embedding_model
            )));
        };
        let e = HttpEmbedder::new(HttpEmbedderConfig {
            url: parse_url("embedding_url", url)?,
            model: self.embedding_model.clone(),
            dim,
            timeout_secs: 30,
        })
        .map_err(|e| ConfigError::Component(e.to_string()))?;
        Ok(Arc::new(e))
    }

    pub fn llm(&self) -> Result<Arc<dyn LlmGateway>, ConfigError> {
        if let Some(path) = &self.llm_replay {
            let llm = ScriptedLlm::from_path(path).map_err(|e| ConfigError::Component(e.to_string()))?;
            return Ok(Arc::new(llm));
        }
        let Some(url) = &self.llm_url else {
            return Err(ConfigError::Invalid("set llm_replay or llm_url".into()));
        };
        Ok(Arc::new(HttpLlm::new(HttpLlmConfig {
            url: parse_url("llm_url", url)?,
            model: self.llm_model.clone(),
            temperature: self.llm_temperature,
            max_tokens: 1024,
            timeout_secs: self.llm_timeout_secs,
        })))
    }

    pub fn ontology_text(&self) -> Result<String, ConfigError> {
        let schema = match &self.ontology {
            Some(path) => OntologySchema::from_path(path).map_err(|e| ConfigError::Component(e.to_string()))?,
            None => OntologySchema::mini_ioe(),
        };
        Ok(schema.serialized_text())
    }

    /// Loads a saved index, else builds one from `templates`, else returns an
    /// empty index.
    pub async fn template_index(&self, embedder: &dyn Embedder) -> Result<TemplateIndex, ConfigError> {
        let component = |e: sparqllm_core::template_store::TemplateError| ConfigError::Component(e.to_string());
        if let Some(path) = &self.index {
            let index = TemplateIndex::load(path).map_err(component)?;
            index
                .ensure_config(self.embedding_mode, self.metric)
                .map_err(component)?;
            return Ok(index);
        }
        let templates = match &self.templates {
            Some(path) => load_templates(path).map_err(component)?,
            None => Vec::new(),
        };
        TemplateIndex::build(templates, embedder, self.index_params())
            .await
            .map_err(component)
    }
}

fn parse_url(key: &str, raw: &str) -> Result<Url, ConfigError> {
    raw.parse()
        .map_err(|e| ConfigError::Invalid(format!("{key} '{raw}': {e}")))
}

/// Numbers and booleans keep their type; everything else is a string.
fn env_value(raw: &str) -> toml::Value {
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    match raw {
        "true" => toml::Value::Boolean(true),
        "false" => toml::Value::Boolean(false),
        _ => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    #[test]
    fn env_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sparqllm.toml");
        std::fs::write(&path, "n_templates = 5\nmetric = \"L2\"\nseed = 1\n").unwrap();
        let env: HashMap<String, String> = [
            ("SPARQLLM_SEED", "9"),
            ("SPARQLLM_EMBEDDING_MODE", "COMBINED"),
            ("SPARQLLM_USE_TEMPLATES", "false"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        let s = Settings::load_with_env(Some(&path), |k| env.get(k).cloned()).unwrap();
        assert_eq!(s.n_templates, 5);
        assert_eq!(s.metric, Metric::L2);
        assert_eq!(s.seed, 9);
        assert_eq!(s.embedding_mode, EmbeddingMode::Combined);
        assert!(!s.use_templates);
        assert_eq!(s.max_attempts, 3);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "n_templatez = 5\n").unwrap();
        assert!(matches!(Settings::load_with_env(Some(&path), |_| None), Err(ConfigError::Invalid(_))));
        let err = Settings::load_with_env(None, |k| (k == "SPARQLLM_MAX_ATTEMPTS").then(|| "0".into()));
        assert!(matches!(err, Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn llm_requires_a_source() {
        assert!(Settings::default().llm().is_err());
        assert!(Settings::default().embedder().is_ok());
    }
}
