use std::collections::BTreeSet;
use std::path::PathBuf;

use sparqllm_core::embedding::MockEmbedder;
use sparqllm_core::sparql::validate_sparql;
use sparqllm_core::template_store::{load_templates, substitute_dummies, IndexParams, TemplateIndex};
use sparqllm_core::vector_index::default_nlist;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn every_fixture_template_validates() {
    for corpus in ["templates/corpus24.jsonl", "templates/corpus360.jsonl", "retrieval/separable12.jsonl"] {
        for t in load_templates(fixtures().join(corpus)).unwrap() {
            validate_sparql(&substitute_dummies(&t.sparql_text)).unwrap_or_else(|e| panic!("{}: {e}", t.id));
        }
    }
}

#[tokio::test]
async fn large_corpus_indexes_and_round_trips() {
    let templates = load_templates(fixtures().join("templates/corpus360.jsonl")).unwrap();
    assert_eq!(templates.len(), 360);
    let targets: BTreeSet<_> = templates.iter().map(|t| t.target.clone()).collect();
    assert_eq!(targets.len(), 24);

    let embedder = MockEmbedder::new(128, 7).unwrap();
    let index = TemplateIndex::build(templates, &embedder, IndexParams::default()).await.unwrap();
    assert_eq!(index.ivf().unwrap().nlist(), default_nlist(360));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.json");
    index.save(&path).unwrap();
    let loaded = TemplateIndex::load(&path).unwrap();
    let q = "average power rating per zone for each actuator";
    let a = index.retrieve(q, 5, &embedder).await.unwrap();
    let b = loaded.retrieve(q, 5, &embedder).await.unwrap();
    let ids = |r: &[sparqllm_core::template_store::RetrievedTemplate]| r.iter().map(|x| (x.template.id.clone(), x.score)).collect::<Vec<_>>();
    assert_eq!(ids(&a), ids(&b));
}
