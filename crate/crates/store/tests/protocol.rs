use sparqllm_store::{spawn_ephemeral, EndpointOptions, SPARQL_QUERY, SPARQL_RESULTS_JSON, SPARQL_UPDATE};

#[tokio::test]
async fn update_then_query_over_http() {
    let endpoint = spawn_ephemeral(EndpointOptions::default()).await.unwrap();
    let client = reqwest::Client::new();

    let resp = client
        .post(endpoint.sparql_url())
        .header("content-type", SPARQL_UPDATE)
        .body("INSERT DATA { <http://e/a> <http://e/p> \"20.5\"^^<http://www.w3.org/2001/XMLSchema#double> }")
        .send()
        .await
        .unwrap();
    assert!(resp.status().is_success());

    let resp = client
        .post(endpoint.sparql_url())
        .header("content-type", SPARQL_QUERY)
        .body("SELECT (COUNT(*) AS ?n) WHERE { ?s ?p ?o }")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()["content-type"], SPARQL_RESULTS_JSON);
    let json: serde_json::Value = resp.json().await.unwrap();
    assert_eq!(json["head"]["vars"][0], "n");
    assert_eq!(json["results"]["bindings"][0]["n"]["value"], "1");

    endpoint.shutdown().await;
}

#[tokio::test]
async fn malformed_query_is_400_with_message() {
    let endpoint = spawn_ephemeral(EndpointOptions::default()).await.unwrap();
    let resp = reqwest::Client::new()
        .post(endpoint.sparql_url())
        .header("content-type", SPARQL_QUERY)
        .body("SELEC ?s")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);
    assert!(!resp.text().await.unwrap().is_empty());
    endpoint.shutdown().await;
}

#[tokio::test]
async fn get_with_query_parameter() {
    let endpoint = spawn_ephemeral(EndpointOptions::default()).await.unwrap();
    let resp = reqwest::Client::new()
        .get(endpoint.sparql_url())
        .query(&[("query", "ASK { }")])
        .send()
        .await
        .unwrap();
    assert!(resp.status().is_success());
    let json: serde_json::Value = resp.json().await.unwrap();
    assert_eq!(json["boolean"], true);
    endpoint.shutdown().await;
}
