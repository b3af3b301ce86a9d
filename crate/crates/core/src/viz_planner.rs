//! Result summaries, plot-or-table decisions, declarative chart planning and
//! plain-text table rendering.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::query_generator::LlmGateway;
use crate::rdf::xsd;
use crate::sparql::{Cell, SparqlResultSet};
use crate::table::render_grid;
use crate::template_store::ConfusionMatrix;

/// Up to this many categories a share chart is a pie; beyond, a bar chart.
pub const PIE_MAX_CATEGORIES: usize = 8;
/// Rows needed before a plot is considered.
pub const PLOT_MIN_ROWS: usize = 3;
/// Average rows per category at which a distribution plot beats a bar chart.
const BOX_MIN_ROWS_PER_GROUP: f64 = 3.0;
pub const MAX_CHART_REPAIRS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Temporal,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Numeric => "NUMERIC",
            ColumnKind::Categorical => "CATEGORICAL",
            ColumnKind::Temporal => "TEMPORAL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub kind: ColumnKind,
    /// Bound cells.
    pub count: usize,
    pub distinct: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    /// Population standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stddev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub rows: usize,
    pub columns: Vec<ColumnSummary>,
}

impl DataSummary {
    pub fn column(&self, name: &str) -> Option<&ColumnSummary> {
        self.columns.iter().find(|c| c.name == name)
    }

    fn of_kind(&self, kind: ColumnKind) -> impl Iterator<Item = &ColumnSummary> {
        self.columns.iter().filter(move |c| c.kind == kind)
    }
}

fn numeric_value(cell: &Cell) -> Option<f64> {
    match cell {
        Cell::Literal { lexical, datatype } if xsd::is_numeric(datatype) || datatype == xsd::STRING => {
            lexical.trim().parse::<f64>().ok().filter(|v| v.is_finite())
        }
        _ => None,
    }
}

fn looks_temporal(lexical: &str) -> bool {
    let s = lexical.trim();
    chrono::NaiveDate::parse_from_str(s.get(..10).unwrap_or(""), "%Y-%m-%d").is_ok()
        && (s.len() == 10
            || chrono::DateTime::parse_from_rfc3339(s).is_ok()
            || chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f").is_ok())
}

fn is_temporal(cell: &Cell) -> bool {
    match cell {
        Cell::Literal { lexical, datatype } => {
            (xsd::is_temporal(datatype) || datatype == xsd::STRING) && looks_temporal(lexical)
        }
        _ => false,
    }
}

/// Kinds and descriptive statistics over bound cells.
pub fn summarize_results(rs: &SparqlResultSet) -> DataSummary {
    let columns = rs
        .variables()
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let bound: Vec<&Cell> = rs.column(i).filter(|c| c.is_bound()).collect();
            let numbers: Option<Vec<f64>> = bound.iter().map(|c| numeric_value(c)).collect();
            let kind = match numbers {
                Some(_) if !bound.is_empty() => ColumnKind::Numeric,
                _ if !bound.is_empty() && bound.iter().all(|c| is_temporal(c)) => ColumnKind::Temporal,
                _ => ColumnKind::Categorical,
            };
            let mut summary = ColumnSummary {
                name: name.clone(),
                kind,
                count: bound.len(),
                distinct: 0,
                min: None,
                max: None,
                mean: None,
                stddev: None,
            };
            if let (ColumnKind::Numeric, Some(values)) = (kind, numbers) {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                summary.distinct = values
                    .iter()
                    .map(|v| if *v == 0.0 { 0f64.to_bits() } else { v.to_bits() })
                    .collect::<HashSet<_>>()
                    .len();
                summary.min = values.iter().copied().reduce(f64::min);
                summary.max = values.iter().copied().reduce(f64::max);
                summary.mean = Some(mean.clamp(summary.min.unwrap(), summary.max.unwrap()));
                summary.stddev = Some(var.sqrt());
            } else {
                summary.distinct = bound.iter().map(|c| (c.text(), matches!(c, Cell::Iri(_)))).collect::<HashSet<_>>().len();
            }
            summary
        })
        .collect();
    DataSummary { rows: rs.len(), columns }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Plot,
    Table,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Plot => "plot",
            Representation::Table => "table",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionSource {
    Llm,
    Heuristic,
}

fn is_enumeration(question: &str) -> bool {
    let q = question.trim().to_lowercase();
    let words: Vec<&str> = q.split_whitespace().collect();
    matches!(words.first(), Some(&"list" | &"enumerate")) || words.starts_with(&["show", "all"])
}

/// PLOT iff a numeric column exists, there are at least three rows and the
/// question does not ask for an enumeration.
pub fn heuristic_representation(question: &str, summary: &DataSummary) -> Representation {
    if summary.of_kind(ColumnKind::Numeric).next().is_some() && summary.rows >= PLOT_MIN_ROWS && !is_enumeration(question) {
        Representation::Plot
    } else {
        Representation::Table
    }
}

fn question_section(question: &str) -> String {
    format!("### Question\n{}\n\n", question.trim())
}

fn summary_text(summary: &DataSummary) -> String {
    let mut out = format!("Rows: {}\nColumns:\n", summary.rows);
    for c in &summary.columns {
        out.push_str(&format!("- {} ({}, {} values, {} distinct", c.name, c.kind, c.count, c.distinct));
        if let (Some(min), Some(max), Some(mean)) = (c.min, c.max, c.mean) {
            out.push_str(&format!(", min {min}, max {max}, mean {mean:.3}"));
        }
        out.push_str(")\n");
    }
    out
}

fn parse_representation(answer: &str) -> Option<Representation> {
    match answer.trim().trim_end_matches('.').to_ascii_lowercase().as_str() {
        "plot" => Some(Representation::Plot),
        "table" => Some(Representation::Table),
        _ => None,
    }
}

/// Asks the gateway when one is given (one re-ask on an unparseable answer),
/// otherwise or on failure applies [`heuristic_representation`].
pub async fn decide_representation(
    question: &str,
    query: &str,
    summary: &DataSummary,
    gateway: Option<&dyn LlmGateway>,
) -> (Representation, DecisionSource) {
    if let Some(llm) = gateway {
        let base = format!(
            "Decide whether the query result below is best shown as a plot or as a table.\n\n{}### Query\n{query}\n\n### Result summary\n{}\nAnswer with exactly one word: plot or table.\n",
            question_section(question),
            summary_text(summary)
        );
        let mut prompt = base.clone();
        for _ in 0..2 {
            match llm.complete(&prompt).await {
                Ok(answer) => {
                    if let Some(r) = parse_representation(&answer) {
                        return (r, DecisionSource::Llm);
                    }
                    prompt = format!("{base}\nYour previous answer '{}' was not 'plot' or 'table'.\n", answer.trim());
                }
                Err(e) => {
                    tracing::warn!(error = %e, "representation gateway failed");
                    break;
                }
            }
        }
        tracing::info!("falling back to the representation heuristic");
    }
    (heuristic_representation(question, summary), DecisionSource::Heuristic)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Bar,
    Line,
    Scatter,
    Violin,
    Box,
    Pie,
    Table,
}

impl ChartKind {
    pub const ALL: [ChartKind; 7] = [
        ChartKind::Bar,
        ChartKind::Line,
        ChartKind::Scatter,
        ChartKind::Violin,
        ChartKind::Box,
        ChartKind::Pie,
        ChartKind::Table,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChartKind::Bar => "bar",
            ChartKind::Line => "line",
            ChartKind::Scatter => "scatter",
            ChartKind::Violin => "violin",
            ChartKind::Box => "box",
            ChartKind::Pie => "pie",
            ChartKind::Table => "table",
        }
    }
}

impl fmt::Display for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Declarative chart. Wire format keeps every key, with `x: null` when absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub kind: ChartKind,
    pub x: Option<String>,
    #[serde(default)]
    pub y: Vec<String>,
    pub title: String,
    #[serde(default)]
    pub x_label: String,
    #[serde(default)]
    pub y_label: String,
}

impl ChartSpec {
    pub fn table(title: impl Into<String>) -> Self {
        Self {
            kind: ChartKind::Table,
            x: None,
            y: Vec::new(),
            title: title.into(),
            x_label: String::new(),
            y_label: String::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("chart spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        serde_json::from_str(s).map_err(|e| e.to_string())
    }
}

/// Checks the spec's encodings against the summarized result columns.
pub fn validate_chart(spec: &ChartSpec, summary: &DataSummary) -> Result<(), String> {
    if spec.title.trim().is_empty() {
        return Err("title is empty".into());
    }
    let column = |name: &str| summary.column(name).ok_or_else(|| format!("column '{name}' is not in the result"));
    let x = spec.x.as_deref().map(column).transpose()?;
    let mut seen = HashSet::new();
    let mut ys = Vec::new();
    for y in &spec.y {
        if !seen.insert(y.as_str()) {
            return Err(format!("column '{y}' appears twice in y"));
        }
        ys.push(column(y)?);
    }
    let numeric_ys = |kind: ChartKind| -> Result<(), String> {
        if ys.is_empty() {
            return Err(format!("{kind:?} needs at least one y column").to_lowercase());
        }
        match ys.iter().find(|c| c.kind != ColumnKind::Numeric) {
            Some(c) => Err(format!("y column '{}' is {}, not NUMERIC", c.name, c.kind)),
            None => Ok(()),
        }
    };
    match spec.kind {
        ChartKind::Table => {
            if x.is_some() || !ys.is_empty() {
                return Err("table takes no x or y encoding".into());
            }
        }
        ChartKind::Line | ChartKind::Scatter => {
            let x = x.ok_or("line and scatter charts need an x column")?;
            if x.kind == ColumnKind::Categorical {
                return Err(format!("x column '{}' must be NUMERIC or TEMPORAL", x.name));
            }
            numeric_ys(spec.kind)?;
        }
        ChartKind::Pie => {
            let x = x.ok_or("pie charts need a CATEGORICAL x column")?;
            if x.kind != ColumnKind::Categorical {
                return Err(format!("pie category column '{}' must be CATEGORICAL", x.name));
            }
            if ys.len() != 1 {
                return Err("pie charts need exactly one value column".into());
            }
            numeric_ys(spec.kind)?;
        }
        ChartKind::Bar => {
            x.ok_or("bar charts need an x column")?;
            numeric_ys(spec.kind)?;
        }
        ChartKind::Box | ChartKind::Violin => {
            if let Some(x) = x {
                if x.kind != ColumnKind::Categorical {
                    return Err(format!("group column '{}' must be CATEGORICAL", x.name));
                }
            }
            numeric_ys(spec.kind)?;
        }
    }
    Ok(())
}

fn spec_for(kind: ChartKind, question: &str, x: Option<&ColumnSummary>, ys: &[&ColumnSummary]) -> ChartSpec {
    let y: Vec<String> = ys.iter().map(|c| c.name.clone()).collect();
    let title = if question.trim().is_empty() {
        match x {
            Some(x) => format!("{} by {}", y.join(", "), x.name),
            None => y.join(", "),
        }
    } else {
        question.trim().to_string()
    };
    ChartSpec {
        kind,
        x: x.map(|c| c.name.clone()),
        y_label: y.join(", "),
        y,
        title,
        x_label: x.map(|c| c.name.clone()).unwrap_or_default(),
    }
}

/// Rule-based chart choice; `None` when no rule applies.
pub fn heuristic_chart(question: &str, summary: &DataSummary) -> Option<ChartSpec> {
    let numeric: Vec<&ColumnSummary> = summary.of_kind(ColumnKind::Numeric).collect();
    let temporal = summary.of_kind(ColumnKind::Temporal).next();
    let categorical = summary
        .of_kind(ColumnKind::Categorical)
        .filter(|c| c.count > 0)
        .min_by_key(|c| c.distinct);
    let first = *numeric.first()?;
    if let Some(t) = temporal {
        return Some(spec_for(ChartKind::Line, question, Some(t), &numeric));
    }
    if let Some(cat) = categorical {
        let per_group = cat.count as f64 / cat.distinct.max(1) as f64;
        if per_group >= BOX_MIN_ROWS_PER_GROUP {
            return Some(spec_for(ChartKind::Box, question, Some(cat), &[first]));
        }
        let non_negative = first.min.is_some_and(|m| m >= 0.0);
        let kind = if cat.distinct <= PIE_MAX_CATEGORIES && non_negative {
            ChartKind::Pie
        } else {
            ChartKind::Bar
        };
        let ys = if kind == ChartKind::Pie { vec![first] } else { numeric.clone() };
        return Some(spec_for(kind, question, Some(cat), &ys));
    }
    if numeric.len() >= 2 {
        return Some(spec_for(ChartKind::Scatter, question, Some(first), &numeric[1..2]));
    }
    Some(spec_for(ChartKind::Box, question, None, &[first]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanSource {
    Llm,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPlan {
    pub spec: ChartSpec,
    pub source: PlanSource,
    /// Rejected proposals, each with its validation error.
    pub rejected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no valid chart for this result: {0}")]
pub struct PlanError(pub String);

fn parse_spec(output: &str) -> Result<ChartSpec, String> {
    let start = output.find('{').ok_or("no JSON object in the answer")?;
    let end = output.rfind('}').ok_or("no JSON object in the answer")?;
    if end < start {
        return Err("no JSON object in the answer".into());
    }
    ChartSpec::from_json(&output[start..=end])
}

/// Proposes a chart (LLM with up to [`MAX_CHART_REPAIRS`] repairs, else the
/// heuristic). Whatever is returned has passed [`validate_chart`].
pub async fn plan_chart(
    question: &str,
    query: &str,
    summary: &DataSummary,
    gateway: Option<&dyn LlmGateway>,
) -> Result<ChartPlan, PlanError> {
    let mut rejected = Vec::new();
    if let Some(llm) = gateway {
        let base = format!(
            "Propose a chart for the query result below.\n\n{}### Query\n{query}\n\n### Result summary\n{}\nAllowed kinds: bar, line, scatter, violin, box, pie, table.\nAnswer with one JSON object {{\"kind\", \"x\", \"y\": [..], \"title\", \"x_label\", \"y_label\"}} using only the listed columns.\n",
            question_section(question),
            summary_text(summary)
        );
        let mut prompt = base.clone();
        for _ in 0..=MAX_CHART_REPAIRS {
            let answer = match llm.complete(&prompt).await {
                Ok(a) => a,
                Err(e) => {
                    tracing::warn!(error = %e, "chart gateway failed");
                    break;
                }
            };
            match parse_spec(&answer).and_then(|spec| validate_chart(&spec, summary).map(|()| spec)) {
                Ok(spec) => {
                    return Ok(ChartPlan {
                        spec,
                        source: PlanSource::Llm,
                        rejected,
                    })
                }
                Err(e) => {
                    prompt = format!("{base}\nYour previous answer was rejected: {e}\nPrevious answer:\n{}\n", answer.trim());
                    rejected.push(e);
                }
            }
        }
    }
    let spec = heuristic_chart(question, summary).ok_or_else(|| PlanError("no numeric column to plot".into()))?;
    validate_chart(&spec, summary).map_err(PlanError)?;
    Ok(ChartPlan {
        spec,
        source: PlanSource::Heuristic,
        rejected,
    })
}

fn display_cell(cell: &Cell) -> String {
    match cell {
        Cell::Unbound => String::new(),
        Cell::Blank(label) => format!("_:{label}"),
        other => other.text().to_string(),
    }
}

/// Aligned table with a row-count footer; rows past `max_rows` are elided.
pub fn render_table_text(rs: &SparqlResultSet, max_rows: usize) -> String {
    let shown: Vec<Vec<String>> = rs
        .rows()
        .iter()
        .take(max_rows)
        .map(|r| r.iter().map(display_cell).collect())
        .collect();
    let mut out = render_grid(rs.variables(), &shown);
    out.push('\n');
    let hidden = rs.len().saturating_sub(max_rows);
    if hidden > 0 {
        out.push_str(&format!("… {hidden} more ({} rows)", rs.len()));
    } else {
        out.push_str(&format!("{} row{}", rs.len(), if rs.len() == 1 { "" } else { "s" }));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizColumn {
    pub name: String,
    pub kind: ColumnKind,
}

/// Labeled sample of the plot/table decision benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizSample {
    pub question: String,
    #[serde(default)]
    pub query: String,
    pub rows: usize,
    pub columns: Vec<VizColumn>,
    pub label: Representation,
}

impl VizSample {
    pub fn summary(&self) -> DataSummary {
        DataSummary {
            rows: self.rows,
            columns: self
                .columns
                .iter()
                .map(|c| ColumnSummary {
                    name: c.name.clone(),
                    kind: c.kind,
                    count: self.rows,
                    distinct: self.rows,
                    min: None,
                    max: None,
                    mean: None,
                    stddev: None,
                })
                .collect(),
        }
    }
}

pub fn parse_viz_dataset(text: &str) -> Result<Vec<VizSample>, Vec<String>> {
    let mut samples = Vec::new();
    let mut offenders = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<VizSample>(line) {
            Ok(s) if s.question.trim().is_empty() => offenders.push(format!("line {}: empty question", no + 1)),
            Ok(s) => samples.push(s),
            Err(e) => offenders.push(format!("line {}: {e}", no + 1)),
        }
    }
    if samples.is_empty() && offenders.is_empty() {
        offenders.push("dataset has no samples".into());
    }
    if offenders.is_empty() {
        Ok(samples)
    } else {
        Err(offenders)
    }
}

pub fn load_viz_dataset(path: impl AsRef<Path>) -> Result<Vec<VizSample>, Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![e.to_string()])?;
    parse_viz_dataset(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizReport {
    pub samples: usize,
    pub accuracy: f64,
    /// Rows are true labels, columns predictions, both in (plot, table) order.
    pub confusion: ConfusionMatrix,
    /// Per-label recall in (plot, table) order; `None` for an absent label.
    pub recall: Vec<Option<f64>>,
}

impl VizReport {
    pub fn to_text(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".into(), |v| format!("{:.1}%", v * 100.0));
        let headers = vec!["actual \\ predicted".to_string(), "plot".into(), "table".into(), "recall".into()];
        let rows: Vec<Vec<String>> = self
            .confusion
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                vec![
                    l.clone(),
                    self.confusion.counts[i][0].to_string(),
                    self.confusion.counts[i][1].to_string(),
                    pct(self.recall[i]),
                ]
            })
            .collect();
        format!(
            "Visualization decision over {} samples: accuracy {:.1}%\n{}\n",
            self.samples,
            self.accuracy * 100.0,
            render_grid(&headers, &rows)
        )
    }
}

pub async fn run_viz_eval(samples: &[VizSample], gateway: Option<&dyn LlmGateway>) -> VizReport {
    let mut pairs = Vec::with_capacity(samples.len());
    for s in samples {
        let (predicted, _) = decide_representation(&s.question, &s.query, &s.summary(), gateway).await;
        pairs.push((s.label.to_string(), predicted.to_string()));
    }
    let labels = vec!["plot".to_string(), "table".to_string()];
    let confusion = ConfusionMatrix::with_labels(labels, pairs.iter().map(|(t, p)| (t.as_str(), p.as_str())));
    let correct = pairs.iter().filter(|(t, p)| t == p).count();
    let recall = (0..2)
        .map(|i| {
            let total = confusion.row_total(i);
            (total > 0).then(|| confusion.counts[i][i] as f64 / total as f64)
        })
        .collect();
    VizReport {
        samples: samples.len(),
        accuracy: if samples.is_empty() { 0.0 } else { correct as f64 / samples.len() as f64 },
        confusion,
        recall,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query_generator::ScriptedLlm;

    fn num(v: &str) -> Cell {
        Cell::literal(v, xsd::INTEGER)
    }

    fn text(v: &str) -> Cell {
        Cell::literal(v, xsd::STRING)
    }

    fn rs(vars: &[&str], rows: Vec<Vec<Cell>>) -> SparqlResultSet {
        SparqlResultSet::new(vars.iter().map(|v| v.to_string()).collect(), rows).unwrap()
    }

    #[test]
    fn numeric_statistics() {
        let s = summarize_results(&rs(&["v"], vec![vec![num("1")], vec![num("2")], vec![num("3")]]));
        let c = &s.columns[0];
        assert_eq!(c.kind, ColumnKind::Numeric);
        assert_eq!((c.count, c.distinct), (3, 3));
        assert_eq!((c.min, c.max, c.mean), (Some(1.0), Some(3.0), Some(2.0)));
        assert!((c.stddev.unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn kinds_and_empty() {
        let s = summarize_results(&rs(
            &["s", "t", "u"],
            vec![
                vec![Cell::Iri("http://e/a".into()), Cell::literal("2024-01-01T10:00:00Z", xsd::DATE_TIME), Cell::Unbound],
                vec![Cell::Iri("http://e/a".into()), Cell::literal("2024-01-02", xsd::DATE), Cell::Unbound],
            ],
        ));
        assert_eq!(s.columns[0].kind, ColumnKind::Categorical);
        assert_eq!(s.columns[0].distinct, 1);
        assert!(s.columns[0].mean.is_none());
        assert_eq!(s.columns[1].kind, ColumnKind::Temporal);
        assert_eq!(s.columns[2].count, 0);

        let empty = summarize_results(&rs(&["a", "b"], vec![]));
        assert!(empty.columns.iter().all(|c| c.count == 0 && c.distinct == 0));
    }

    fn summary(rows: usize, cols: &[(&str, ColumnKind, usize)]) -> DataSummary {
        DataSummary {
            rows,
            columns: cols
                .iter()
                .map(|(n, k, d)| ColumnSummary {
                    name: n.to_string(),
                    kind: *k,
                    count: rows,
                    distinct: *d,
                    min: (*k == ColumnKind::Numeric).then_some(0.0),
                    max: (*k == ColumnKind::Numeric).then_some(10.0),
                    mean: (*k == ColumnKind::Numeric).then_some(5.0),
                    stddev: (*k == ColumnKind::Numeric).then_some(1.0),
                })
                .collect(),
        }
    }

    #[test]
    fn representation_heuristic() {
        let objects = summary(12, &[("obj", ColumnKind::Categorical, 12), ("cat", ColumnKind::Categorical, 3)]);
        assert_eq!(
            heuristic_representation("List all IoT smart objects and their categories", &objects),
            Representation::Table
        );
        let series = summary(50, &[("t", ColumnKind::Temporal, 50), ("v", ColumnKind::Numeric, 40)]);
        assert_eq!(heuristic_representation("how did temperature evolve", &series), Representation::Plot);
        assert_eq!(
            heuristic_representation("List readings", &series),
            Representation::Table
        );
        let single = summary(1, &[("n", ColumnKind::Numeric, 1)]);
        assert_eq!(heuristic_representation("how many sensors", &single), Representation::Table);
    }

    #[test]
    fn heuristic_charts() {
        let kind = |s: &DataSummary| heuristic_chart("q", s).unwrap().kind;
        assert_eq!(kind(&summary(10, &[("a", ColumnKind::Numeric, 10), ("b", ColumnKind::Numeric, 10)])), ChartKind::Scatter);
        assert_eq!(kind(&summary(4, &[("c", ColumnKind::Categorical, 4), ("v", ColumnKind::Numeric, 4)])), ChartKind::Pie);
        assert_eq!(kind(&summary(12, &[("c", ColumnKind::Categorical, 12), ("v", ColumnKind::Numeric, 12)])), ChartKind::Bar);
        assert_eq!(kind(&summary(30, &[("c", ColumnKind::Categorical, 3), ("v", ColumnKind::Numeric, 30)])), ChartKind::Box);
        assert_eq!(kind(&summary(30, &[("t", ColumnKind::Temporal, 30), ("v", ColumnKind::Numeric, 30)])), ChartKind::Line);
        assert!(heuristic_chart("q", &summary(5, &[("c", ColumnKind::Categorical, 5)])).is_none());
        let scatter = heuristic_chart("q", &summary(10, &[("a", ColumnKind::Numeric, 10), ("b", ColumnKind::Numeric, 10)])).unwrap();
        assert_eq!((scatter.x.as_deref(), scatter.y.as_slice()), (Some("a"), &["b".to_string()][..]));
    }

    #[test]
    fn validator_rejects_bad_specs() {
        let s = summary(5, &[("c", ColumnKind::Categorical, 5), ("v", ColumnKind::Numeric, 5)]);
        let mut spec = heuristic_chart("q", &s).unwrap();
        assert!(validate_chart(&spec, &s).is_ok());
        spec.y = vec!["missing".into()];
        assert!(validate_chart(&spec, &s).unwrap_err().contains("not in the result"));
        let line = ChartSpec {
            kind: ChartKind::Line,
            x: Some("c".into()),
            y: vec!["v".into()],
            title: "t".into(),
            x_label: String::new(),
            y_label: String::new(),
        };
        assert!(validate_chart(&line, &s).is_err());
        let mut table = ChartSpec::table("t");
        assert!(validate_chart(&table, &s).is_ok());
        table.x = Some("c".into());
        assert!(validate_chart(&table, &s).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let spec = ChartSpec::table("All sensors");
        let json = spec.to_json();
        assert_eq!(json, r#"{"kind":"table","x":null,"y":[],"title":"All sensors","x_label":"","y_label":""}"#);
        assert_eq!(ChartSpec::from_json(&json).unwrap(), spec);
    }

    #[tokio::test]
    async fn llm_plan_repairs_then_succeeds() {
        let s = summary(5, &[("c", ColumnKind::Categorical, 5), ("v", ColumnKind::Numeric, 5)]);
        let llm = ScriptedLlm::from_responses([
            r#"{"kind":"bar","x":"nope","y":["v"],"title":"T","x_label":"","y_label":""}"#,
        ]);
        // the scripted mock repeats its last reply, so every proposal fails
        let plan = plan_chart("q", "SELECT", &s, Some(&llm)).await.unwrap();
        assert_eq!(plan.source, PlanSource::Heuristic);
        assert_eq!(plan.rejected.len(), MAX_CHART_REPAIRS + 1);

        let good = ScriptedLlm::from_responses([
            r#"Sure: {"kind":"bar","x":"c","y":["v"],"title":"T","x_label":"c","y_label":"v"}"#,
        ]);
        let plan = plan_chart("q", "SELECT", &s, Some(&good)).await.unwrap();
        assert_eq!((plan.source, plan.spec.kind), (PlanSource::Llm, ChartKind::Bar));
    }

    #[tokio::test]
    async fn llm_decision_parsed_strictly() {
        let s = summary(1, &[("n", ColumnKind::Numeric, 1)]);
        let llm = ScriptedLlm::from_responses(["Plot."]);
        assert_eq!(
            decide_representation("q", "", &s, Some(&llm)).await,
            (Representation::Plot, DecisionSource::Llm)
        );
        let chatty = ScriptedLlm::from_responses(["I would use a plot here"]);
        assert_eq!(
            decide_representation("q", "", &s, Some(&chatty)).await,
            (Representation::Table, DecisionSource::Heuristic)
        );
    }

    #[test]
    fn table_rendering() {
        let small = rs(&["a", "b"], vec![vec![text("x"), num("1")], vec![text("yy"), num("22")]]);
        let out = render_table_text(&small, 50);
        assert_eq!(out.lines().count(), 7);
        assert!(out.ends_with("2 rows"));

        let empty = render_table_text(&rs(&["a"], vec![]), 50);
        assert!(empty.contains("| a |"));
        assert!(empty.ends_with("0 rows"));

        let big = rs(&["n"], (0..1000).map(|i| vec![num(&i.to_string())]).collect());
        let out = render_table_text(&big, 50);
        assert!(out.contains("… 950 more"));
        assert_eq!(out.lines().filter(|l| l.starts_with("| ") && !l.contains(" n ")).count(), 50);
    }

    #[tokio::test]
    async fn viz_eval_confusion_shape() {
        let line = |q: &str, rows: usize, label: &str| {
            format!(
                r#"{{"question":"{q}","rows":{rows},"columns":[{{"name":"c","kind":"CATEGORICAL"}},{{"name":"v","kind":"NUMERIC"}}],"label":"{label}"}}"#
            )
        };
        let text = [line("average by room", 5, "plot"), line("list rooms", 5, "table"), line("count", 1, "plot")].join("\n");
        let samples = parse_viz_dataset(&text).unwrap();
        let report = run_viz_eval(&samples, None).await;
        assert_eq!(report.confusion.labels, ["plot", "table"]);
        assert_eq!(report.confusion.counts, vec![vec![1, 1], vec![0, 1]]);
        assert!((report.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.recall, vec![Some(0.5), Some(1.0)]);
        assert!(parse_viz_dataset("").is_err());
    }
}
