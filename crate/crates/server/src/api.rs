use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sparqllm_core::embedding::Embedder;
use sparqllm_core::kg_store::{count_triples, parse_mapping, run_etl, CellError, CleaningConfig, EtlError, LoadReport, RowSet};
use sparqllm_core::query_generator::{GenerationConfig, GenerationError, GenerationTrace, LlmGateway, Pipeline};
use sparqllm_core::sparql::{QueryErrorKind, SparqlClient, SparqlResultSet};
use sparqllm_core::template_store::{
    parse_templates, IndexParams, RetrievedItem, Template, TemplateError, TemplateIndex,
};
use sparqllm_core::viz_planner::{
    decide_representation, plan_chart, summarize_results, ChartSpec, DataSummary, DecisionSource, Representation,
};
use tower_http::cors::CorsLayer;

const PROBE_BUDGET: Duration = Duration::from_secs(2);

/// Shared handles plus the swappable template snapshot.
#[derive(Clone)]
pub struct AppState {
    index: Arc<RwLock<Arc<TemplateIndex>>>,
    embedder: Arc<dyn Embedder>,
    llm: Arc<dyn LlmGateway>,
    client: SparqlClient,
    ontology_text: Arc<str>,
    generation: GenerationConfig,
    index_params: IndexParams,
}

impl AppState {
    pub fn new(
        index: TemplateIndex,
        embedder: Arc<dyn Embedder>,
        llm: Arc<dyn LlmGateway>,
        client: SparqlClient,
        ontology_text: String,
        generation: GenerationConfig,
        index_params: IndexParams,
    ) -> Self {
        Self {
            index: Arc::new(RwLock::new(Arc::new(index))),
            embedder,
            llm,
            client,
            ontology_text: ontology_text.into(),
            generation,
            index_params,
        }
    }

    pub fn snapshot(&self) -> Arc<TemplateIndex> {
        self.index.read().expect("index lock poisoned").clone()
    }

    fn swap(&self, next: TemplateIndex) {
        *self.index.write().expect("index lock poisoned") = Arc::new(next);
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/ask", post(ask))
        .route("/api/templates", get(list_templates).post(replace_templates))
        .route("/api/etl", post(etl))
        .route("/api/health", get(health))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Body of every non-2xx answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
    #[serde(skip)]
    status: u16,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
            detail: Value::Null,
            status: status.as_u16(),
        }
    }

    pub fn status(&self) -> u16 {
        self.status
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

fn trace_detail(trace: &GenerationTrace) -> Value {
    json!({ "trace": trace })
}

impl From<GenerationError> for ApiError {
    fn from(err: GenerationError) -> Self {
        let message = err.to_string();
        match &err {
            GenerationError::Input(_) => ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message),
            GenerationError::Exhausted { trace } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "exhausted", message).with_detail(trace_detail(trace))
            }
            GenerationError::Gateway { trace, .. } => {
                ApiError::new(StatusCode::BAD_GATEWAY, "llm_unavailable", message).with_detail(trace_detail(trace))
            }
            GenerationError::Endpoint { error, trace } => {
                let (status, code) = if error.kind == QueryErrorKind::Timeout {
                    (StatusCode::GATEWAY_TIMEOUT, "sparql_timeout")
                } else {
                    (StatusCode::BAD_GATEWAY, "sparql_unavailable")
                };
                ApiError::new(status, code, message).with_detail(trace_detail(trace))
            }
            GenerationError::Retrieval(TemplateError::Embedding(_)) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "embedding_unavailable", message)
            }
            GenerationError::Retrieval(_) => ApiError::new(StatusCode::CONFLICT, "retrieval_unavailable", message),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AskRequest {
    pub question: String,
    #[serde(default)]
    pub n_templates: Option<usize>,
    #[serde(default)]
    pub use_templates: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub question: String,
    pub sparql: String,
    pub retrieved: Vec<RetrievedItem>,
    pub trace: GenerationTrace,
    pub results: SparqlResultSet,
    pub summary: DataSummary,
    pub representation: Representation,
    pub decision_source: DecisionSource,
    pub chart_spec: ChartSpec,
}

async fn ask(State(state): State<AppState>, Json(req): Json<AskRequest>) -> Result<Json<AskResponse>, ApiError> {
    answer(&state, req).await.map(Json)
}

/// Question to SPARQL, results and a presentation plan.
pub async fn answer(state: &AppState, req: AskRequest) -> Result<AskResponse, ApiError> {
    if req.question.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "question is empty"));
    }
    let mut config = state.generation;
    if let Some(n) = req.n_templates {
        config.n_templates = n;
    }
    if let Some(u) = req.use_templates {
        config.use_templates = u;
    }
    if let Err(e) = config.validate() {
        return Err(e.into());
    }
    let index = state.snapshot();
    let pipeline = Pipeline {
        index: &index,
        embedder: state.embedder.as_ref(),
        llm: state.llm.as_ref(),
        executor: &state.client,
        ontology_text: &state.ontology_text,
    };
    let output = pipeline.generate_query(&req.question, &config).await.map_err(|(_, e)| ApiError::from(e))?;
    let sparql = output.generated.trace.final_query.clone().unwrap_or_default();
    let results = output.generated.results;
    let summary = summarize_results(&results);
    // mock gateway: heuristics only
    let viz_llm = (!state.llm.is_mock()).then_some(state.llm.as_ref());
    let (representation, decision_source) = decide_representation(&req.question, &sparql, &summary, viz_llm).await;
    let chart_spec = match representation {
        Representation::Plot => match plan_chart(&req.question, &sparql, &summary, viz_llm).await {
            Ok(plan) => plan.spec,
            Err(err) => {
                tracing::warn!(%err, "falling back to a table");
                ChartSpec::table(req.question.trim())
            }
        },
        Representation::Table => ChartSpec::table(req.question.trim()),
    };
    Ok(AskResponse {
        question: req.question,
        sparql,
        retrieved: output
            .retrieved
            .iter()
            .map(|r| RetrievedItem {
                template_id: r.template.id.clone(),
                target: r.template.target.clone(),
                score: r.score,
            })
            .collect(),
        trace: output.generated.trace,
        results,
        summary,
        representation,
        decision_source,
        chart_spec,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateListing {
    pub count: usize,
    pub embedding_model: String,
    pub templates: Vec<Template>,
}

async fn list_templates(State(state): State<AppState>) -> Json<TemplateListing> {
    let index = state.snapshot();
    Json(TemplateListing {
        count: index.len(),
        embedding_model: index.embedding_model().to_string(),
        templates: index.templates().to_vec(),
    })
}

/// Replaces the whole corpus with the JSONL body. The new index is built
/// before the swap, so a rejected upload leaves the old corpus serving.
async fn replace_templates(State(state): State<AppState>, body: String) -> Result<Json<Value>, ApiError> {
    let templates = parse_templates(&body).map_err(|e| match e {
        TemplateError::Load(errors) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_templates", "template upload rejected")
            .with_detail(json!({ "errors": errors })),
        other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_templates", other.to_string()),
    })?;
    let index = TemplateIndex::build(templates, state.embedder.as_ref(), state.index_params)
        .await
        .map_err(|e| match e {
            TemplateError::Embedding(_) => ApiError::new(StatusCode::BAD_GATEWAY, "embedding_unavailable", e.to_string()),
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_templates", other.to_string()),
        })?;
    let count = index.len();
    state.swap(index);
    tracing::info!(count, "template corpus replaced");
    Ok(Json(json!({ "count": count })))
}

#[derive(Debug, Clone, Deserialize)]
pub struct EtlRequest {
    /// CSV text with a header row.
    pub csv: String,
    /// Mapping rules, as in a mapping file.
    pub mapping: Value,
    #[serde(default)]
    pub cleaning: Option<CleaningConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtlResponse {
    pub rows: usize,
    pub triples: usize,
    pub load: LoadReport,
    pub cell_errors: Vec<CellError>,
    pub store_triples: u64,
}

async fn etl(State(state): State<AppState>, Json(req): Json<EtlRequest>) -> Result<Json<EtlResponse>, ApiError> {
    let invalid = |msg: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_etl_input", msg);
    let rows = RowSet::from_csv_reader(req.csv.as_bytes()).map_err(|e| invalid(e.to_string()))?;
    let mapping = parse_mapping(&req.mapping.to_string()).map_err(|e| invalid(e.to_string()))?;
    let cleaning = req.cleaning.unwrap_or_default();
    let summary = run_etl(&rows, &mapping, &cleaning, &state.client).await.map_err(|e| match e {
        EtlError::Load(err) => ApiError::new(StatusCode::BAD_GATEWAY, "sparql_unavailable", err.to_string())
            .with_detail(json!({ "load": err.report() })),
        other => invalid(other.to_string()),
    })?;
    let store_triples = count_triples(&state.client)
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, "sparql_unavailable", e.to_string()))?;
    Ok(Json(EtlResponse {
        rows: summary.rows,
        triples: summary.triples,
        load: summary.load,
        cell_errors: summary.cell_errors,
        store_triples,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub sparql: String,
    pub llm: String,
    pub templates: usize,
    pub embedding_model: String,
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    let (sparql_ok, llm_ok) = tokio::join!(state.client.probe(PROBE_BUDGET), state.llm.probe(PROBE_BUDGET));
    let reach = |ok: bool| if ok { "ok" } else { "unreachable" }.to_string();
    let llm = if state.llm.is_mock() { "mock".to_string() } else { reach(llm_ok) };
    let index = state.snapshot();
    Json(Health {
        status: if sparql_ok && llm_ok { "ok" } else { "degraded" }.into(),
        sparql: reach(sparql_ok),
        llm,
        templates: index.len(),
        embedding_model: index.embedding_model().to_string(),
    })
}
