use std::path::PathBuf;

use sparqllm_core::embedding::MockEmbedder;
use sparqllm_core::template_store::{
    load_retrieval_dataset, load_templates, run_retrieval_eval, EmbeddingMode, IndexParams, TemplateIndex,
};
use sparqllm_core::vector_index::Metric;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

async fn index(corpus: &str, mode: EmbeddingMode, metric: Metric, embedder: &MockEmbedder) -> TemplateIndex {
    let templates = load_templates(fixtures().join(corpus)).unwrap();
    let params = IndexParams {
        mode,
        metric,
        ..IndexParams::default()
    };
    TemplateIndex::build(templates, embedder, params).await.unwrap()
}

#[tokio::test]
async fn separable_corpus_is_perfect_at_top1() {
    let embedder = MockEmbedder::new(256, 42).unwrap();
    let samples = load_retrieval_dataset(fixtures().join("retrieval/separable_questions.csv")).unwrap();
    for mode in [EmbeddingMode::Direct, EmbeddingMode::Description, EmbeddingMode::Combined] {
        for metric in Metric::ALL {
            let idx = index("retrieval/separable12.jsonl", mode, metric, &embedder).await;
            let report = run_retrieval_eval(&idx, &samples, &[1], &embedder).await.unwrap();
            assert_eq!(report.grid[0].accuracy, 1.0, "{mode:?} {metric:?}");
            assert!((report.grid[0].mcc - 1.0).abs() < 1e-12);
        }
    }
}

#[tokio::test]
async fn sweep_emits_one_row_per_n() {
    let embedder = MockEmbedder::new(256, 42).unwrap();
    let samples = load_retrieval_dataset(fixtures().join("retrieval/questions36.csv")).unwrap();
    assert_eq!(samples.len(), 36);
    let idx = index("templates/corpus24.jsonl", EmbeddingMode::Combined, Metric::Cosine, &embedder).await;
    let report = run_retrieval_eval(&idx, &samples, &[1, 2, 5, 7, 10], &embedder).await.unwrap();
    let ns: Vec<_> = report.grid.iter().map(|r| r.n).collect();
    assert_eq!(ns, [1, 2, 5, 7, 10]);
    for row in &report.grid {
        assert!((0.0..=1.0).contains(&row.accuracy));
        assert!((-1.0..=1.0).contains(&row.mcc));
    }
    assert_eq!(report.class_confusion.labels, ["FILTER", "GROUP_BY", "SELECT"]);
    let total: i64 = report.target_confusion.counts.iter().flatten().sum();
    assert_eq!(total, 36);
    println!("{}", report.to_text());
}
