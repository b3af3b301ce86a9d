//! In-process SPARQL 1.1 protocol endpoint.
//!
//! Wraps an in-memory [`oxigraph`] store behind the HTTP protocol surface the
//! pipeline talks to (`application/sparql-query`, `application/sparql-update`,
//! `application/sparql-results+json`), so tests and demos run without an
//! external triplestore.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use oxigraph::sparql::results::QueryResultsFormat;
use oxigraph::sparql::QueryResults;
use oxigraph::store::Store;
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::{oneshot, RwLock};
use tokio::task::JoinHandle;

pub const SPARQL_QUERY: &str = "application/sparql-query";
pub const SPARQL_UPDATE: &str = "application/sparql-update";
pub const SPARQL_RESULTS_JSON: &str = "application/sparql-results+json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store initialisation failed: {0}")]
    Init(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Options for a served endpoint.
#[derive(Debug, Clone, Default)]
pub struct EndpointOptions {
    /// Artificial latency added to every query, used to exercise client timeouts.
    pub query_delay: Option<Duration>,
}

/// Shared in-memory store.
///
/// Reads run concurrently; writes take the exclusive side of the lock so
/// updates are applied one at a time.
#[derive(Clone)]
pub struct EmbeddedStore {
    store: Store,
    write_lock: Arc<RwLock<()>>,
}

impl EmbeddedStore {
    pub fn new() -> Result<Self, StoreError> {
        let store = Store::new().map_err(|e| StoreError::Init(e.to_string()))?;
        Ok(Self {
            store,
            write_lock: Arc::new(RwLock::new(())),
        })
    }

    /// Number of triples in the default graph.
    pub fn len(&self) -> usize {
        self.store.len().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Runs a query and returns the SPARQL JSON results document.
    pub async fn query_json(&self, query: &str) -> Result<Vec<u8>, String> {
        let _guard = self.write_lock.read().await;
        let results = self.store.query(query).map_err(|e| e.to_string())?;
        match results {
            QueryResults::Graph(_) => Err("CONSTRUCT/DESCRIBE queries are not supported".into()),
            other => other
                .write(Vec::new(), QueryResultsFormat::Json)
                .map_err(|e| e.to_string()),
        }
    }

    pub async fn update(&self, update: &str) -> Result<(), String> {
        let _guard = self.write_lock.write().await;
        self.store.update(update).map_err(|e| e.to_string())
    }
}

/// A running endpoint. Dropping the handle does not stop the server; call
/// [`RunningEndpoint::shutdown`].
pub struct RunningEndpoint {
    pub addr: SocketAddr,
    pub store: EmbeddedStore,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl RunningEndpoint {
    /// URL of the SPARQL protocol endpoint.
    pub fn sparql_url(&self) -> String {
        format!("http://{}/sparql", self.addr)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.task.await;
    }
}

#[derive(Clone)]
struct AppState {
    store: EmbeddedStore,
    options: EndpointOptions,
}

#[derive(Debug, Deserialize)]
struct QueryParams {
    query: Option<String>,
}

pub fn router(store: EmbeddedStore, options: EndpointOptions) -> Router {
    Router::new()
        .route("/sparql", get(get_query).post(post_sparql))
        .route("/health", get(|| async { "ok" }))
        .with_state(AppState { store, options })
}

/// Binds `addr` (use port 0 for an ephemeral port) and serves `store`.
pub async fn serve(
    store: EmbeddedStore,
    addr: SocketAddr,
    options: EndpointOptions,
) -> Result<RunningEndpoint, StoreError> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(store.clone(), options);
    let task = tokio::spawn(async move {
        let server = axum::serve(listener, app).with_graceful_shutdown(async {
            let _ = rx.await;
        });
        if let Err(err) = server.await {
            tracing::error!(%err, "embedded sparql endpoint stopped");
        }
    });
    Ok(RunningEndpoint {
        addr,
        store,
        shutdown: Some(tx),
        task,
    })
}

/// Starts a fresh empty store on an ephemeral localhost port.
pub async fn spawn_ephemeral(options: EndpointOptions) -> Result<RunningEndpoint, StoreError> {
    serve(EmbeddedStore::new()?, ([127, 0, 0, 1], 0).into(), options).await
}

async fn get_query(State(state): State<AppState>, Query(params): Query<QueryParams>) -> Response {
    match params.query {
        Some(q) => run_query(&state, &q).await,
        None => (StatusCode::BAD_REQUEST, "missing query parameter").into_response(),
    }
}

async fn post_sparql(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let content_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .split(';')
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase();
    let Ok(text) = std::str::from_utf8(&body) else {
        return (StatusCode::BAD_REQUEST, "body is not valid UTF-8").into_response();
    };
    match content_type.as_str() {
        SPARQL_QUERY => run_query(&state, text).await,
        SPARQL_UPDATE => match state.store.update(text).await {
            Ok(()) => StatusCode::NO_CONTENT.into_response(),
            Err(msg) => (StatusCode::BAD_REQUEST, msg).into_response(),
        },
        other => (
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            format!("unsupported content type '{other}'"),
        )
            .into_response(),
    }
}

async fn run_query(state: &AppState, query: &str) -> Response {
    if let Some(delay) = state.options.query_delay {
        tokio::time::sleep(delay).await;
    }
    match state.store.query_json(query).await {
        Ok(body) => ([(header::CONTENT_TYPE, SPARQL_RESULTS_JSON)], body).into_response(),
        Err(msg) => (StatusCode::BAD_REQUEST, msg).into_response(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn insert_is_set_semantics() {
        let store = EmbeddedStore::new().unwrap();
        let update = "INSERT DATA { <http://e/s> <http://e/p> \"1\" }";
        store.update(update).await.unwrap();
        store.update(update).await.unwrap();
        assert_eq!(store.len(), 1);
    }

    #[tokio::test]
    async fn syntax_error_is_reported() {
        let store = EmbeddedStore::new().unwrap();
        assert!(store.query_json("SELEC ?s").await.is_err());
    }
}
