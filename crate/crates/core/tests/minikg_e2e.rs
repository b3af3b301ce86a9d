use std::path::PathBuf;

use sparqllm_core::embedding::MockEmbedder;
use sparqllm_core::generation_eval::{load_eval_dataset, run_generation_eval};
use sparqllm_core::kg_store::{count_triples, discover_jobs, OntologySchema};
use sparqllm_core::query_generator::{GenerationConfig, Pipeline, ScriptedLlm};
use sparqllm_core::sparql::SparqlClient;
use sparqllm_core::template_store::{load_templates, EmbeddingMode, IndexParams, TemplateIndex};
use sparqllm_store::{spawn_ephemeral, EndpointOptions};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[tokio::test]
async fn mini_kg_twelve_questions() {
    let endpoint = spawn_ephemeral(EndpointOptions::default()).await.unwrap();
    let client = SparqlClient::new(endpoint.sparql_url().parse().unwrap());
    let mut inserted = 0;
    for job in discover_jobs(fixtures().join("kg")).unwrap() {
        let summary = job.run(&client).await.unwrap();
        assert!(summary.cell_errors.is_empty(), "{:?}", summary.cell_errors);
        inserted += summary.load.inserted;
    }
    assert_eq!(count_triples(&client).await.unwrap(), inserted as u64);

    let embedder = MockEmbedder::new(256, 42).unwrap();
    let templates = load_templates(fixtures().join("templates/corpus24.jsonl")).unwrap();
    let params = IndexParams {
        mode: EmbeddingMode::Combined,
        ..IndexParams::default()
    };
    let index = TemplateIndex::build(templates, &embedder, params).await.unwrap();
    let llm = ScriptedLlm::from_path(fixtures().join("eval/replay12.json")).unwrap();
    let ontology = OntologySchema::mini_ioe().serialized_text();
    let pipeline = Pipeline {
        index: &index,
        embedder: &embedder,
        llm: &llm,
        executor: &client,
        ontology_text: &ontology,
    };
    let samples = load_eval_dataset(fixtures().join("eval/generation12.jsonl")).unwrap();
    let report = run_generation_eval(&samples, &pipeline, &client, &GenerationConfig::default())
        .await
        .unwrap();
    for o in &report.outcomes {
        assert!(o.executed && o.content_match, "{o:?}");
        assert_eq!(o.top1_target, o.expected_target, "{}", o.sample_id);
    }
    assert_eq!(report.overall.esr, 1.0);
    assert_eq!(report.overall.rmr, Some(1.0));
    assert_eq!(report.retrieval_top1_accuracy, Some(1.0));
    let repaired: Vec<_> = report.outcomes.iter().filter(|o| o.attempts == 2).map(|o| o.sample_id.as_str()).collect();
    assert_eq!(repaired, ["q03", "q11"]);
    endpoint.shutdown().await;
}
