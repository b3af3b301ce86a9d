//! SPARQL 1.1 protocol client.

use std::fmt;
use std::time::Duration;

use async_trait::async_trait;
use reqwest::header::{ACCEPT, CONTENT_TYPE};
use serde::{Deserialize, Serialize};
use url::Url;

use super::results::SparqlResultSet;

pub const SPARQL_QUERY: &str = "application/sparql-query";
pub const SPARQL_UPDATE: &str = "application/sparql-update";
pub const SPARQL_RESULTS_JSON: &str = "application/sparql-results+json";

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryErrorKind {
    /// The query was empty or rejected by the endpoint as malformed.
    Syntax,
    Timeout,
    Transport,
    /// Any other non-2xx answer, or an unparseable results document.
    Endpoint,
}

impl fmt::Display for QueryErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryErrorKind::Syntax => "syntax",
            QueryErrorKind::Timeout => "timeout",
            QueryErrorKind::Transport => "transport",
            QueryErrorKind::Endpoint => "endpoint",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{kind} error: {message}")]
pub struct QueryError {
    pub kind: QueryErrorKind,
    pub message: String,
}

impl QueryError {
    pub fn new(kind: QueryErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum UpdateError {
    #[error("endpoint unreachable: {0}")]
    Transport(String),
    #[error("endpoint answered HTTP {status}: {body}")]
    Protocol { status: u16, body: String },
}

/// Anything that can run a SPARQL SELECT/ASK query.
#[async_trait]
pub trait SparqlExecutor: Send + Sync {
    async fn execute(&self, query: &str) -> Result<SparqlResultSet, QueryError>;
}

#[derive(Debug, Clone)]
pub struct SparqlClient {
    endpoint: Url,
    http: reqwest::Client,
    timeout: Duration,
}

impl SparqlClient {
    pub fn new(endpoint: Url) -> Self {
        Self::with_timeout(endpoint, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(endpoint: Url, timeout: Duration) -> Self {
        Self {
            endpoint,
            http: reqwest::Client::new(),
            timeout,
        }
    }

    pub fn endpoint(&self) -> &Url {
        &self.endpoint
    }

    pub async fn query(&self, query: &str) -> Result<SparqlResultSet, QueryError> {
        if query.trim().is_empty() {
            return Err(QueryError::new(QueryErrorKind::Syntax, "empty query"));
        }
        let response = self
            .http
            .post(self.endpoint.clone())
            .header(CONTENT_TYPE, SPARQL_QUERY)
            .header(ACCEPT, SPARQL_RESULTS_JSON)
            .timeout(self.timeout)
            .body(query.to_string())
            .send()
            .await
            .map_err(classify_transport)?;
        let status = response.status();
        let body = response.text().await.map_err(classify_transport)?;
        if status.is_success() {
            SparqlResultSet::from_json_str(&body)
                .map_err(|e| QueryError::new(QueryErrorKind::Endpoint, e.to_string()))
        } else if status == reqwest::StatusCode::BAD_REQUEST {
            Err(QueryError::new(QueryErrorKind::Syntax, body))
        } else {
            Err(QueryError::new(
                QueryErrorKind::Endpoint,
                format!("HTTP {}: {body}", status.as_u16()),
            ))
        }
    }

    pub async fn update(&self, update: &str) -> Result<(), UpdateError> {
        let response = self
            .http
            .post(self.endpoint.clone())
            .header(CONTENT_TYPE, SPARQL_UPDATE)
            .timeout(self.timeout)
            .body(update.to_string())
            .send()
            .await
            .map_err(|e| UpdateError::Transport(e.to_string()))?;
        let status = response.status();
        if status.is_success() {
            Ok(())
        } else {
            Err(UpdateError::Protocol {
                status: status.as_u16(),
                body: response.text().await.unwrap_or_default(),
            })
        }
    }

    /// Cheap reachability probe (`ASK {}`) with its own budget.
    pub async fn probe(&self, budget: Duration) -> bool {
        let probe = Self {
            timeout: budget,
            ..self.clone()
        };
        probe.query("ASK {}").await.is_ok()
    }
}

fn classify_transport(err: reqwest::Error) -> QueryError {
    if err.is_timeout() {
        QueryError::new(QueryErrorKind::Timeout, err.to_string())
    } else {
        QueryError::new(QueryErrorKind::Transport, err.to_string())
    }
}

#[async_trait]
impl SparqlExecutor for SparqlClient {
    async fn execute(&self, query: &str) -> Result<SparqlResultSet, QueryError> {
        self.query(query).await
    }
}
