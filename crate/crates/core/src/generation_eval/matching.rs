//! Datatype-aware, order- and name-independent comparison of result sets.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::rdf::xsd;
use crate::sparql::{Cell, SparqlResultSet};

/// Upper bound on column permutations tried inside equal-signature groups.
const MAX_PERMUTATIONS: usize = 40_320;

#[derive(Debug, Clone, Copy)]
struct Num(f64);

impl PartialEq for Num {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Num {}

impl PartialOrd for Num {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Num {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Comparison key of one cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Canon {
    Unbound,
    Blank,
    Num(Num),
    Time(i64, u32),
    Bool(bool),
    Iri(String),
    Text(String),
}

fn parse_timestamp(lexical: &str, datatype: &str) -> Option<(i64, u32)> {
    let s = lexical.trim();
    let to_key = |dt: DateTime<chrono::Utc>| (dt.timestamp(), dt.timestamp_subsec_nanos());
    if datatype == xsd::DATE {
        // a date may carry a zone suffix, which shifts its start instant
        let (date, zone) = if let Some(d) = s.strip_suffix('Z') {
            (d, Some("+00:00"))
        } else if s.len() > 10 && matches!(s.as_bytes()[10], b'+' | b'-') {
            (&s[..10], Some(&s[10..]))
        } else {
            (s, None)
        };
        let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").ok()?;
        return match zone {
            Some(z) => DateTime::parse_from_rfc3339(&format!("{date}T00:00:00{z}"))
                .ok()
                .map(|d| to_key(d.to_utc())),
            None => Some(to_key(date.and_hms_opt(0, 0, 0)?.and_utc())),
        };
    }
    if let Ok(d) = DateTime::parse_from_rfc3339(s) {
        return Some(to_key(d.to_utc()));
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .ok()
        .map(|d| to_key(d.and_utc()))
}

fn canonical(cell: &Cell) -> Canon {
    match cell {
        Cell::Unbound => Canon::Unbound,
        Cell::Blank(_) => Canon::Blank,
        Cell::Iri(iri) => Canon::Iri(iri.clone()),
        Cell::Literal { lexical, datatype } => {
            if xsd::is_numeric(datatype) {
                if let Ok(v) = lexical.trim().parse::<f64>() {
                    // -0 and 0 are the same number
                    return Canon::Num(Num(if v == 0.0 { 0.0 } else { v }));
                }
            } else if xsd::is_temporal(datatype) {
                if let Some((secs, nanos)) = parse_timestamp(lexical, datatype) {
                    return Canon::Time(secs, nanos);
                }
            } else if datatype == xsd::BOOLEAN {
                match lexical.trim() {
                    "true" | "1" => return Canon::Bool(true),
                    "false" | "0" => return Canon::Bool(false),
                    _ => {}
                }
            }
            Canon::Text(lexical.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched: bool,
    /// Why the sets differ; absent on a match.
    pub diagnostic: Option<String>,
}

impl MatchResult {
    fn yes() -> Self {
        Self {
            matched: true,
            diagnostic: None,
        }
    }

    fn no(reason: impl Into<String>) -> Self {
        Self {
            matched: false,
            diagnostic: Some(reason.into()),
        }
    }
}

fn columns(rs: &SparqlResultSet) -> Vec<Vec<Canon>> {
    (0..rs.variables().len())
        .map(|i| rs.column(i).map(canonical).collect())
        .collect()
}

fn signature(column: &[Canon]) -> Vec<Canon> {
    let mut s = column.to_vec();
    s.sort();
    s
}

fn sorted_rows(cols: &[Vec<Canon>], order: &[usize], rows: usize) -> Vec<Vec<Canon>> {
    let mut out: Vec<Vec<Canon>> = (0..rows)
        .map(|r| order.iter().map(|&c| cols[c][r].clone()).collect())
        .collect();
    out.sort();
    out
}

/// Advances `perm` to the next lexicographic permutation; false when done.
fn next_permutation(perm: &mut [usize]) -> bool {
    let Some(i) = (1..perm.len()).rev().find(|&i| perm[i - 1] < perm[i]) else {
        return false;
    };
    let j = (i..perm.len()).rev().find(|&j| perm[j] > perm[i - 1]).expect("pivot exists");
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// True iff the two sets hold the same multiset of rows once columns are
/// paired by content (names ignored) and literals compared by value.
pub fn result_match(actual: &SparqlResultSet, expected: &SparqlResultSet) -> MatchResult {
    let (na, ne) = (actual.variables().len(), expected.variables().len());
    if na != ne {
        return MatchResult::no(format!("expected {ne} columns, got {na}"));
    }
    if actual.len() != expected.len() {
        return MatchResult::no(format!("expected {} rows, got {}", expected.len(), actual.len()));
    }
    let a_cols = columns(actual);
    let e_cols = columns(expected);

    // expected columns visited in name order
    let mut e_order: Vec<usize> = (0..ne).collect();
    e_order.sort_by(|&x, &y| expected.variables()[x].cmp(&expected.variables()[y]));

    // group expected and actual columns by value signature
    let mut groups: BTreeMap<Vec<Canon>, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for &e in &e_order {
        groups.entry(signature(&e_cols[e])).or_default().0.push(e);
    }
    for (a, col) in a_cols.iter().enumerate() {
        match groups.get_mut(&signature(col)) {
            Some(g) => g.1.push(a),
            None => {
                return MatchResult::no(format!(
                    "column ?{} has no counterpart in the expected results",
                    actual.variables()[a]
                ))
            }
        }
    }
    let groups: Vec<(Vec<usize>, Vec<usize>)> = groups.into_values().collect();
    for (e, a) in &groups {
        if e.len() != a.len() {
            return MatchResult::no(format!(
                "column ?{} has no counterpart in the actual results",
                expected.variables()[e[0]]
            ));
        }
    }

    let mut combos: usize = 1;
    for (e, _) in &groups {
        combos = combos.saturating_mul((1..=e.len()).product());
    }
    if combos > MAX_PERMUTATIONS {
        return MatchResult::no(format!(
            "ambiguous column alignment: {combos} candidate pairings exceed the limit of {MAX_PERMUTATIONS}"
        ));
    }

    let e_flat: Vec<usize> = groups.iter().flat_map(|(e, _)| e.iter().copied()).collect();
    let expected_rows = sorted_rows(&e_cols, &e_flat, expected.len());
    let mut perms: Vec<Vec<usize>> = groups.iter().map(|(_, a)| (0..a.len()).collect()).collect();
    let mut first_diff: Option<String> = None;
    loop {
        let a_flat: Vec<usize> = groups
            .iter()
            .zip(&perms)
            .flat_map(|((_, a), p)| p.iter().map(|&i| a[i]))
            .collect();
        let actual_rows = sorted_rows(&a_cols, &a_flat, actual.len());
        if actual_rows == expected_rows {
            return MatchResult::yes();
        }
        if first_diff.is_none() {
            let pos = actual_rows.iter().zip(&expected_rows).position(|(x, y)| x != y).unwrap_or(0);
            first_diff = Some(format!(
                "first differing row (canonical order) #{pos}: expected {:?}, got {:?}",
                expected_rows[pos], actual_rows[pos]
            ));
        }
        // odometer over per-group permutations
        let mut advanced = false;
        for p in perms.iter_mut() {
            if next_permutation(p) {
                advanced = true;
                break;
            }
            p.sort_unstable();
        }
        if !advanced {
            return MatchResult::no(first_diff.unwrap_or_default());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(v: &str, dt: &str) -> Cell {
        Cell::literal(v, dt)
    }

    fn rs(vars: &[&str], rows: Vec<Vec<Cell>>) -> SparqlResultSet {
        SparqlResultSet::new(vars.iter().map(|v| v.to_string()).collect(), rows).unwrap()
    }

    fn fixture(vars: &[&str]) -> SparqlResultSet {
        rs(
            vars,
            vec![
                vec![Cell::Iri("http://e/s1".into()), lit("20.5", xsd::DOUBLE)],
                vec![Cell::Iri("http://e/s2".into()), lit("18", xsd::INTEGER)],
                vec![Cell::Iri("http://e/s3".into()), lit("21.25", xsd::DECIMAL)],
            ],
        )
    }

    #[test]
    fn shuffled_rows_match() {
        let a = fixture(&["s", "v"]);
        let mut rows = a.rows().to_vec();
        rows.reverse();
        assert!(result_match(&rs(&["s", "v"], rows), &a).matched);
    }

    #[test]
    fn renamed_and_reordered_columns_match() {
        let a = fixture(&["s", "v"]);
        let swapped: Vec<Vec<Cell>> = a.rows().iter().map(|r| vec![r[1].clone(), r[0].clone()]).collect();
        assert!(result_match(&rs(&["value", "sensor"], swapped), &a).matched);
        assert!(result_match(&fixture(&["x", "y"]), &a).matched);
    }

    #[test]
    fn numeric_and_temporal_equality() {
        let a = rs(&["v"], vec![vec![lit("20.5", xsd::DOUBLE)]]);
        let b = rs(&["v"], vec![vec![lit("20.50", xsd::DECIMAL)]]);
        assert!(result_match(&a, &b).matched);

        let t1 = rs(&["t"], vec![vec![lit("2024-03-01T12:00:00Z", xsd::DATE_TIME)]]);
        let t2 = rs(&["t"], vec![vec![lit("2024-03-01T14:00:00+02:00", xsd::DATE_TIME)]]);
        assert!(result_match(&t1, &t2).matched);

        let d1 = rs(&["d"], vec![vec![lit("2024-03-01", xsd::DATE)]]);
        let d2 = rs(&["d"], vec![vec![lit("2024-03-01Z", xsd::DATE)]]);
        assert!(result_match(&d1, &d2).matched);
    }

    #[test]
    fn strings_compare_exactly() {
        let a = rs(&["v"], vec![vec![lit("Lab", xsd::STRING)]]);
        let b = rs(&["v"], vec![vec![lit("lab", xsd::STRING)]]);
        let r = result_match(&a, &b);
        assert!(!r.matched);
        assert!(r.diagnostic.unwrap().contains("no counterpart"));
        // literal text is not an IRI
        let iri = rs(&["v"], vec![vec![Cell::Iri("Lab".into())]]);
        assert!(!result_match(&a, &iri).matched);
    }

    #[test]
    fn shape_mismatches() {
        let a = fixture(&["s", "v"]);
        let one = rs(&["s"], vec![vec![Cell::Iri("http://e/s1".into())]; 3]);
        assert!(!result_match(&one, &a).matched);
        let short = rs(&["s", "v"], a.rows()[..2].to_vec());
        assert!(!result_match(&short, &a).matched);
    }

    #[test]
    fn equal_signature_columns_need_permutation_search() {
        // both columns hold {1, 2}; only one pairing reproduces the rows
        let n = |v: &str| lit(v, xsd::INTEGER);
        let e = rs(&["a", "b"], vec![vec![n("1"), n("2")], vec![n("2"), n("1")], vec![n("1"), n("1")], vec![n("2"), n("2")]]);
        let a = rs(&["p", "q"], vec![vec![n("2"), n("1")], vec![n("1"), n("2")], vec![n("1"), n("1")], vec![n("2"), n("2")]]);
        assert!(result_match(&a, &e).matched);
        // same column contents, different pairing of values into rows
        let e2 = rs(&["a", "b"], vec![vec![n("1"), n("2")], vec![n("2"), n("1")]]);
        let wrong = rs(&["p", "q"], vec![vec![n("1"), n("1")], vec![n("2"), n("2")]]);
        let r = result_match(&wrong, &e2);
        assert!(!r.matched);
        assert!(r.diagnostic.unwrap().contains("first differing row"));
    }

    #[test]
    fn empty_sets_match() {
        assert!(result_match(&rs(&["a"], vec![]), &rs(&["b"], vec![])).matched);
    }
}
