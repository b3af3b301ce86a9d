use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use serde_json::{json, Value};
use sparqllm_core::kg_store::discover_jobs;
use sparqllm_core::template_store::EmbeddingMode;
use sparqllm_core::viz_planner::ChartKind;
use sparqllm_server::{router, state_from_settings, AskResponse, Settings};
use sparqllm_store::{spawn_ephemeral, EndpointOptions, RunningEndpoint};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

struct Harness {
    api: String,
    store: RunningEndpoint,
    http: reqwest::Client,
}

async fn store_with_kg(options: EndpointOptions) -> RunningEndpoint {
    let store = spawn_ephemeral(options).await.unwrap();
    let client = sparqllm_core::sparql::SparqlClient::new(store.sparql_url().parse().unwrap());
    for job in discover_jobs(fixtures().join("kg")).unwrap() {
        job.run(&client).await.unwrap();
    }
    store
}

fn settings(store: &RunningEndpoint, replay: &str) -> Settings {
    Settings {
        sparql_endpoint: store.sparql_url(),
        llm_replay: Some(fixtures().join(replay)),
        templates: Some(fixtures().join("templates/corpus24.jsonl")),
        embedding_mode: EmbeddingMode::Combined,
        ..Settings::default()
    }
}

async fn start(store: RunningEndpoint, settings: Settings) -> Harness {
    let state = state_from_settings(&settings).await.unwrap();
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    Harness {
        api: format!("http://{addr}/api"),
        store,
        http: reqwest::Client::new(),
    }
}

async fn harness(replay: &str) -> Harness {
    let store = store_with_kg(EndpointOptions::default()).await;
    let s = settings(&store, replay);
    start(store, s).await
}

impl Harness {
    async fn ask(&self, question: &str) -> (u16, Value) {
        let r = self
            .http
            .post(format!("{}/ask", self.api))
            .json(&json!({ "question": question }))
            .send()
            .await
            .unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }

    async fn get(&self, path: &str) -> Value {
        self.http.get(format!("{}/{path}", self.api)).send().await.unwrap().json().await.unwrap()
    }

    async fn post_templates(&self, body: String) -> (u16, Value) {
        let r = self.http.post(format!("{}/templates", self.api)).body(body).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }
}

fn strip_durations(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("duration_ms");
            map.values_mut().for_each(strip_durations);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_durations),
        _ => {}
    }
}

#[tokio::test]
async fn ask_repairs_and_plans_a_view() {
    let h = harness("eval/replay12.json").await;
    let (status, body) = h.ask("Count the sensors per model").await;
    assert_eq!(status, 200, "{body}");
    let resp: AskResponse = serde_json::from_value(body).unwrap();
    assert_eq!(resp.trace.attempts.len(), 2);
    assert_eq!(resp.results.len(), 2);
    assert_eq!(resp.retrieved[0].target, "GROUP_BY|Sensor");
    assert_eq!(resp.chart_spec.kind, ChartKind::Table);

    let (status, body) = h.ask("List each observation with its result value and result time").await;
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["results"]["results"]["bindings"].as_array().unwrap().len(), 5);
    assert_eq!(body["representation"], "table");
    assert!(body["chart_spec"].as_object().unwrap().contains_key("x"));

    let (_, mut a) = h.ask("What is the average result value of the observations made by each sensor?").await;
    let (_, mut b) = h.ask("What is the average result value of the observations made by each sensor?").await;
    assert_eq!(a["representation"], "plot");
    assert_eq!(a["chart_spec"]["kind"], "pie");
    strip_durations(&mut a);
    strip_durations(&mut b);
    assert_eq!(a, b);
    h.store.shutdown().await;
}

#[tokio::test]
async fn empty_question_is_rejected() {
    let h = harness("eval/replay12.json").await;
    let (status, body) = h.ask("   ").await;
    assert_eq!(status, 400);
    assert_eq!(body["code"], "bad_request");
    h.store.shutdown().await;
}

#[tokio::test]
async fn exhausted_repairs_answer_422_with_trace() {
    let h = harness("replay/repair_all_invalid.json").await;
    let (status, body) = h.ask("List each sensor and its model").await;
    assert_eq!(status, 422);
    assert_eq!(body["code"], "exhausted");
    let attempts = body["detail"]["trace"]["attempts"].as_array().unwrap();
    assert_eq!(attempts.len(), 3);
    assert_eq!(body["detail"]["trace"]["outcome"], "EXHAUSTED");
    h.store.shutdown().await;
}

#[tokio::test]
async fn unreachable_llm_answers_502() {
    let h = harness("replay/llm_unreachable.json").await;
    let (status, body) = h.ask("List each sensor and its model").await;
    assert_eq!(status, 502);
    assert_eq!(body["code"], "llm_unavailable");
    h.store.shutdown().await;
}

#[tokio::test]
async fn slow_store_answers_504() {
    let store = store_with_kg(EndpointOptions {
        query_delay: Some(Duration::from_millis(2500)),
    })
    .await;
    let s = Settings {
        sparql_timeout_secs: 1,
        ..settings(&store, "replay/repair_invalid_then_valid.json")
    };
    let h = start(store, s).await;
    let (status, body) = h.ask("List each sensor and its model").await;
    assert_eq!(status, 504, "{body}");
    assert_eq!(body["code"], "sparql_timeout");
    h.store.shutdown().await;
}

#[tokio::test]
async fn template_upload_is_atomic() {
    let h = harness("eval/replay12.json").await;
    assert_eq!(h.get("templates").await["count"], 24);

    let mut bad = std::fs::read_to_string(fixtures().join("retrieval/separable12.jsonl")).unwrap();
    bad.push_str("{\"id\":\"broken\",\"class\":\"SELECT\",\"entity\":\"Sensor\",\"sparql_text\":\"SELECT ?s WHERE {\"}\n");
    let (status, body) = h.post_templates(bad).await;
    assert_eq!(status, 422);
    assert!(body["detail"]["errors"][0].as_str().unwrap().contains("broken"), "{body}");
    assert_eq!(h.get("templates").await["count"], 24);

    let good = std::fs::read_to_string(fixtures().join("retrieval/separable12.jsonl")).unwrap();
    let (status, body) = h.post_templates(good).await;
    assert_eq!(status, 200);
    assert_eq!(body["count"], 12);
    let listing = h.get("templates").await;
    assert_eq!(listing["count"], 12);
    assert_eq!(listing["templates"][0]["id"], "actuator_select_vendor");
    h.store.shutdown().await;
}

#[tokio::test]
async fn etl_is_idempotent() {
    let store = spawn_ephemeral(EndpointOptions::default()).await.unwrap();
    let s = settings(&store, "eval/replay12.json");
    let h = start(store, s).await;
    let body = json!({
        "csv": std::fs::read_to_string(fixtures().join("etl/readings.csv")).unwrap(),
        "mapping": serde_json::from_str::<Value>(&std::fs::read_to_string(fixtures().join("etl/readings_mapping.json")).unwrap()).unwrap(),
    });
    for _ in 0..2 {
        let r: Value = h
            .http
            .post(format!("{}/etl", h.api))
            .json(&body)
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert_eq!(r["load"]["inserted"], 30, "{r}");
        assert_eq!(r["store_triples"], 30);
    }
    let bad = json!({
        "csv": body["csv"],
        "mapping": serde_json::from_str::<Value>(&std::fs::read_to_string(fixtures().join("etl/bad_mapping.json")).unwrap()).unwrap(),
    });
    let r = h.http.post(format!("{}/etl", h.api)).json(&bad).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 422);
    h.store.shutdown().await;
}

#[tokio::test]
async fn health_reports_components() {
    let h = harness("eval/replay12.json").await;
    let body = h.get("health").await;
    assert_eq!(body["status"], "ok");
    assert_eq!(body["sparql"], "ok");
    assert_eq!(body["llm"], "mock");
    assert_eq!(body["templates"], 24);
    let Harness { api, store, http } = h;
    store.shutdown().await;

    let body: Value = http.get(format!("{api}/health")).send().await.unwrap().json().await.unwrap();
    assert_eq!(body["sparql"], "unreachable");
    assert_eq!(body["status"], "degraded");
}
