use proptest::prelude::*;
use sparqllm_core::embedding::EmbeddingVector;
use sparqllm_core::generation_eval::{hra, result_match};
use sparqllm_core::query_generator::extract_sparql;
use sparqllm_core::sparql::{validate_sparql, Cell, SparqlResultSet};
use sparqllm_core::template_store::{multiclass_mcc, retrieval_accuracy, RetrievalRecord, RetrievedItem};
use sparqllm_core::vector_index::{brute_force_search, IvfFlatIndex, Metric};
use sparqllm_core::viz_planner::{plan_chart, summarize_results, validate_chart, ChartKind, ChartSpec};

const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

fn confusion(k: usize) -> impl Strategy<Value = Vec<Vec<i64>>> {
    prop::collection::vec(prop::collection::vec(0i64..30, k), k)
        .prop_filter("non-empty", |m| m.iter().flatten().any(|&v| v > 0))
}

fn permute(m: &[Vec<i64>], p: &[usize]) -> Vec<Vec<i64>> {
    p.iter().map(|&i| p.iter().map(|&j| m[i][j]).collect()).collect()
}

fn metric() -> impl Strategy<Value = Metric> {
    prop_oneof![Just(Metric::Cosine), Just(Metric::Ip), Just(Metric::L2)]
}

fn vectors(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(-10.0f64..10.0, dim)
            .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6),
        n,
    )
}

fn cell() -> impl Strategy<Value = Cell> {
    prop_oneof![
        Just(Cell::Unbound),
        "[a-c]{1,2}".prop_map(|s| Cell::Iri(format!("http://example.org/{s}"))),
        (0i32..20).prop_map(|v| Cell::literal(v.to_string(), format!("{XSD}integer"))),
        "[a-c]{0,2}".prop_map(|s| Cell::literal(s, format!("{XSD}string"))),
    ]
}

fn result_set() -> impl Strategy<Value = SparqlResultSet> {
    (1usize..4).prop_flat_map(|w| {
        prop::collection::vec(prop::collection::vec(cell(), w), 0..6).prop_map(move |rows| {
            let vars = (0..w).map(|i| format!("v{i}")).collect();
            SparqlResultSet::new(vars, rows).unwrap()
        })
    })
}

/// Result sets shaped like query output: one label column plus numeric columns.
fn numeric_result() -> impl Strategy<Value = SparqlResultSet> {
    (1usize..4, 1usize..15).prop_flat_map(|(measures, rows)| {
        prop::collection::vec(
            ("[a-e]{1,3}", prop::collection::vec(-100.0f64..100.0, measures)),
            rows,
        )
        .prop_map(move |data| {
            let mut vars = vec!["label".to_string()];
            vars.extend((0..measures).map(|i| format!("m{i}")));
            let rows = data
                .into_iter()
                .map(|(label, values)| {
                    let mut row = vec![Cell::literal(label, format!("{XSD}string"))];
                    row.extend(values.into_iter().map(|v| Cell::literal(format!("{v:.3}"), format!("{XSD}double"))));
                    row
                })
                .collect();
            SparqlResultSet::new(vars, rows).unwrap()
        })
    })
}

fn chart_spec() -> impl Strategy<Value = ChartSpec> {
    (
        prop::sample::select(ChartKind::ALL.to_vec()),
        prop::option::of("[a-z_]{1,8}"),
        prop::collection::vec("[a-z_]{1,8}", 0..4),
        "\\PC{0,20}",
        "\\PC{0,10}",
        "\\PC{0,10}",
    )
        .prop_map(|(kind, x, y, title, x_label, y_label)| ChartSpec {
            kind,
            x,
            y,
            title,
            x_label,
            y_label,
        })
}

proptest! {
    #[test]
    fn validator_never_panics(query in "\\PC{0,200}") {
        let _ = validate_sparql(&query);
    }

    #[test]
    fn validator_never_panics_on_sparql_like_text(
        parts in prop::collection::vec(
            prop::sample::select(vec![
                "SELECT", "WHERE", "{", "}", "?x", "?y", "ioe:p", "<http://e/x>", ".", ";", "FILTER", "(",
                ")", ">", "\"a\"", "GROUP BY", "COUNT", "AS", "PREFIX", "ioe:", "LIMIT", "10", "*",
            ]),
            0..40,
        )
    ) {
        let _ = validate_sparql(&parts.join(" "));
    }

    #[test]
    fn extraction_never_panics(text in "\\PC{0,200}") {
        let _ = extract_sparql(&text);
    }

    #[test]
    fn mcc_is_bounded(m in (2usize..6).prop_flat_map(confusion)) {
        let v = multiclass_mcc(&m).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v), "mcc {}", v);
    }

    #[test]
    fn mcc_ignores_label_order(
        (m, p) in (2usize..6).prop_flat_map(|k| (confusion(k), Just((0..k).collect::<Vec<_>>()).prop_shuffle()))
    ) {
        let a = multiclass_mcc(&m).unwrap();
        let b = multiclass_mcc(&permute(&m, &p)).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn retrieval_accuracy_is_a_fraction(
        records in prop::collection::vec((0u8..4, prop::collection::vec(0u8..4, 1..5)), 1..20)
    ) {
        let records: Vec<RetrievalRecord> = records
            .into_iter()
            .enumerate()
            .map(|(i, (truth, got))| RetrievalRecord {
                question: format!("q{i}"),
                true_target: format!("T{truth}"),
                retrieved: got
                    .into_iter()
                    .enumerate()
                    .map(|(j, t)| RetrievedItem { template_id: format!("t{j}"), target: format!("T{t}"), score: 0.0 })
                    .collect(),
            })
            .collect();
        let acc = retrieval_accuracy(&records).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
    }

    #[test]
    fn hra_stays_between_inputs(esr in 0.0f64..=1.0, rmr in 0.0f64..=1.0) {
        let h = hra(esr, rmr).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!(h <= esr.max(rmr) + 1e-12);
        prop_assert!(h >= esr.min(rmr) - 1e-12);
    }

    #[test]
    fn hra_rejects_out_of_range(esr in 1.0001f64..10.0, rmr in 0.0f64..=1.0) {
        prop_assert!(hra(esr, rmr).is_err());
        prop_assert!(hra(rmr, -esr).is_err());
    }

    #[test]
    fn full_probe_matches_brute_force(
        data in (2usize..60).prop_flat_map(|n| vectors(n, 4)),
        query in vectors(1, 4),
        metric in metric(),
        k in 1usize..8,
        seed in any::<u64>(),
    ) {
        let items: Vec<(String, EmbeddingVector)> = data
            .into_iter()
            .enumerate()
            .map(|(i, v)| (format!("v{i:03}"), EmbeddingVector::new(v).unwrap()))
            .collect();
        let q = EmbeddingVector::new(query[0].clone()).unwrap();
        let nlist = (items.len() as f64).sqrt().ceil() as usize;
        let (index, _) = IvfFlatIndex::build(&items, nlist, metric, seed).unwrap();
        let full = index.search(&q, k, index.nlist()).unwrap();
        let brute = brute_force_search(&items, &q, k, metric).unwrap();
        let ids = |h: &[sparqllm_core::vector_index::SearchHit]| h.iter().map(|x| x.id.clone()).collect::<Vec<_>>();
        prop_assert_eq!(ids(&full), ids(&brute));
    }

    #[test]
    fn result_match_is_reflexive(rs in result_set()) {
        prop_assert!(result_match(&rs, &rs).matched);
    }

    #[test]
    fn result_match_is_symmetric(a in result_set(), b in result_set()) {
        prop_assert_eq!(result_match(&a, &b).matched, result_match(&b, &a).matched);
    }

    #[test]
    fn result_match_ignores_row_order(rs in result_set(), seed in any::<u64>()) {
        let mut rows: Vec<Vec<Cell>> = rs.rows().to_vec();
        let n = rows.len().max(1);
        rows.rotate_left(seed as usize % n);
        let shuffled = SparqlResultSet::new(rs.variables().to_vec(), rows).unwrap();
        prop_assert!(result_match(&rs, &shuffled).matched);
    }

    #[test]
    fn chart_spec_json_round_trips(spec in chart_spec()) {
        let back: ChartSpec = serde_json::from_str(&spec.to_json()).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn heuristic_charts_are_valid(rs in numeric_result()) {
        let summary = summarize_results(&rs);
        let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
        let plan = rt.block_on(plan_chart("Show the values per label", "SELECT * WHERE { ?s ?p ?o }", &summary, None)).unwrap();
        prop_assert!(validate_chart(&plan.spec, &summary).is_ok(), "{:?}", plan.spec);
    }
}
