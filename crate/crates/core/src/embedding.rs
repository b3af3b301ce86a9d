//! Sentence-embedding providers.
//!
//! [`MockEmbedder`] hashes tokens into seeded Gaussian directions and sums
//! them, so texts sharing tokens land close together. [`HttpEmbedder`] talks
//! to a remote service speaking `POST {model, input: [text]}` →
//! `{data: [{embedding: [...]}]}`.

use std::time::Duration;

use async_trait::async_trait;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyInput,
    #[error("embedding dimension must be at least 2, got {0}")]
    InvalidDim(usize),
    #[error("unknown embedding model '{0}'")]
    UnknownModel(String),
    #[error("embedding provider unreachable after {retries} retries: {message}")]
    Transport { message: String, retries: u32 },
    #[error("embedding provider returned an invalid response: {0}")]
    Protocol(String),
    #[error("expected a {expected}-dimensional vector, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("embedding contains a non-finite value")]
    NonFinite,
}

/// Fixed-length vector of finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::InvalidDim(0));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-length copy; `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0).then(|| Self(self.0.iter().map(|v| v / n).collect()))
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbeddingError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

#[async_trait]
pub trait Embedder: Send + Sync {
    fn model(&self) -> &str;

    fn dim(&self) -> usize;

    async fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
}

/// Lowercased alphanumeric tokens, with camelCase and `prefix:local` names
/// split into their parts.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        if word.is_empty() {
            continue;
        }
        let mut current = String::new();
        let mut prev_lower = false;
        for c in word.chars() {
            if c.is_uppercase() && prev_lower && !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            prev_lower = c.is_lowercase() || c.is_ascii_digit();
            current.extend(c.to_lowercase());
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

fn token_direction(token: &str, dim: usize, seed: u64) -> impl Iterator<Item = f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(token.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
    (0..dim).map(move |_| StandardNormal.sample(&mut rng))
}

/// Deterministic test embedding: sum of per-token pseudo-random Gaussian
/// directions (seeded by a SHA-256 of seed and token), L2-normalized.
pub fn mock_embed(text: &str, dim: usize, seed: u64) -> Result<EmbeddingVector, EmbeddingError> {
    if dim < 2 {
        return Err(EmbeddingError::InvalidDim(dim));
    }
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(EmbeddingError::EmptyInput);
    }
    let mut tokens = tokenize(trimmed);
    if tokens.is_empty() {
        tokens.push(trimmed.to_lowercase());
    }
    let mut acc = vec![0.0; dim];
    for token in &tokens {
        for (a, v) in acc.iter_mut().zip(token_direction(token, dim, seed)) {
            *a += v;
        }
    }
    EmbeddingVector::new(acc)?
        .normalized()
        .ok_or(EmbeddingError::NonFinite)
}

pub const DEFAULT_MOCK_SEED: u64 = 42;

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    model: String,
    dim: usize,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self, EmbeddingError> {
        if dim < 2 {
            return Err(EmbeddingError::InvalidDim(dim));
        }
        Ok(Self {
            model: format!("mock-{dim}"),
            dim,
            seed,
        })
    }

    /// Parses model ids of the form `mock-<dim>`.
    pub fn from_model_id(model: &str, seed: u64) -> Result<Self, EmbeddingError> {
        let dim = model
            .strip_prefix("mock-")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| EmbeddingError::UnknownModel(model.to_string()))?;
        Self::new(dim, seed)
    }
}

#[async_trait]
impl Embedder for MockEmbedder {
    fn model(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    async fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        mock_embed(text, self.dim, self.seed)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpEmbedderConfig {
    pub url: Url,
    pub model: String,
    pub dim: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    30
}

/// Remote provider. Transport failures and 5xx answers are retried.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    http: reqwest::Client,
    retries: u32,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: [&'a str; 1],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub const DEFAULT_RETRIES: u32 = 2;

    pub fn new(config: HttpEmbedderConfig) -> Result<Self, EmbeddingError> {
        if config.dim < 2 {
            return Err(EmbeddingError::InvalidDim(config.dim));
        }
        Ok(Self {
            config,
            http: reqwest::Client::new(),
            retries: Self::DEFAULT_RETRIES,
        })
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    async fn attempt(&self, text: &str) -> Result<Result<Vec<f64>, EmbeddingError>, String> {
        let response = self
            .http
            .post(self.config.url.clone())
            .timeout(Duration::from_secs(self.config.timeout_secs))
            .json(&EmbedRequest {
                model: &self.config.model,
                input: [text],
            })
            .send()
            .await
            .map_err(|e| e.to_string())?;
        let status = response.status();
        if status.is_server_error() {
            return Err(format!("HTTP {}", status.as_u16()));
        }
        if !status.is_success() {
            let body = response.text().await.unwrap_or_default();
            return Ok(Err(EmbeddingError::Protocol(format!("HTTP {}: {body}", status.as_u16()))));
        }
        let parsed: EmbedResponse = match response.json().await {
            Ok(p) => p,
            Err(e) => return Ok(Err(EmbeddingError::Protocol(e.to_string()))),
        };
        Ok(parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| EmbeddingError::Protocol("empty data array".into())))
    }
}

#[async_trait]
impl Embedder for HttpEmbedder {
    fn model(&self) -> &str {
        &self.config.model
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    async fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        let mut last = String::new();
        for attempt in 0..=self.retries {
            match self.attempt(text).await {
                Ok(result) => {
                    let values = result?;
                    if values.len() != self.config.dim {
                        return Err(EmbeddingError::DimMismatch {
                            expected: self.config.dim,
                            got: values.len(),
                        });
                    }
                    return EmbeddingVector::new(values);
                }
                Err(message) => {
                    tracing::warn!(attempt, %message, "embedding request failed");
                    last = message;
                }
            }
        }
        Err(EmbeddingError::Transport {
            message: last,
            retries: self.retries,
        })
    }
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    dot / (a.norm() * b.norm())
}
