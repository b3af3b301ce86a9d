//! Generation metrics (ESR, RCA, RMR, HRA) and the evaluation harness.

mod matching;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use matching::{result_match, MatchResult};

use crate::query_generator::{GenerationConfig, GenerationError, GenerationTrace, Outcome, Pipeline};
use crate::sparql::{SparqlExecutor, SparqlResultSet};
use crate::table::render_grid;
use crate::template_store::{MetricError, TemplateClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Complexity {
    Simple,
    Medium,
    Complex,
}

impl fmt::Display for Complexity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Complexity::Simple => "SIMPLE",
            Complexity::Medium => "MEDIUM",
            Complexity::Complex => "COMPLEX",
        })
    }
}

impl FromStr for Complexity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SIMPLE" => Ok(Complexity::Simple),
            "MEDIUM" => Ok(Complexity::Medium),
            "COMPLEX" => Ok(Complexity::Complex),
            _ => Err(format!("unknown complexity '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub question: String,
    pub gold_query: String,
    pub entity: String,
    pub complexity: Complexity,
    pub expected_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_results: Option<SparqlResultSet>,
    /// `CLASS|Entity` of the template that should be retrieved first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

impl EvalSample {
    /// Query class read off the gold query: GROUP BY, else FILTER, else SELECT.
    pub fn class(&self) -> TemplateClass {
        let upper = self.gold_query.to_ascii_uppercase();
        let words: Vec<&str> = upper.split(|c: char| !c.is_ascii_alphabetic()).filter(|w| !w.is_empty()).collect();
        if words.windows(2).any(|w| w == ["GROUP", "BY"]) {
            TemplateClass::GroupBy
        } else if words.contains(&"FILTER") {
            TemplateClass::Filter
        } else {
            TemplateClass::Select
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("evaluation dataset rejected:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),
    #[error("cannot read evaluation dataset: {0}")]
    Io(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub fn parse_eval_dataset(text: &str) -> Result<Vec<EvalSample>, EvalError> {
    let mut samples = Vec::new();
    let mut offenders = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EvalSample>(line) {
            Ok(mut s) => {
                if s.question.trim().is_empty() || s.entity.trim().is_empty() {
                    offenders.push(format!("line {}: empty question or entity", no + 1));
                    continue;
                }
                s.id.get_or_insert_with(|| format!("s{:03}", samples.len() + 1));
                samples.push(s);
            }
            Err(e) => offenders.push(format!("line {}: {e}", no + 1)),
        }
    }
    if !offenders.is_empty() {
        return Err(EvalError::Schema(offenders));
    }
    if samples.is_empty() {
        return Err(EvalError::Schema(vec!["dataset has no samples".into()]));
    }
    Ok(samples)
}

pub fn load_eval_dataset(path: impl AsRef<Path>) -> Result<Vec<EvalSample>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(e.to_string()))?;
    parse_eval_dataset(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub sample_id: String,
    pub entity: String,
    pub class: TemplateClass,
    pub complexity: Complexity,
    pub executed: bool,
    pub returned_count: u64,
    pub count_correct: bool,
    pub content_match: bool,
    pub attempts: usize,
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top1_target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    /// Kept out of reports, which must not depend on wall-clock durations.
    #[serde(skip)]
    pub trace: Option<GenerationTrace>,
}

fn ratio(num: usize, den: usize) -> f64 {
    num as f64 / den as f64
}

/// N_success / N_total.
pub fn esr(outcomes: &[EvalOutcome]) -> Result<f64, MetricError> {
    if outcomes.is_empty() {
        return Err(MetricError::Undefined("ESR of zero samples".into()));
    }
    Ok(ratio(outcomes.iter().filter(|o| o.executed).count(), outcomes.len()))
}

fn over_successes(outcomes: &[EvalOutcome], name: &str, hit: impl Fn(&EvalOutcome) -> bool) -> Result<f64, MetricError> {
    let executed: Vec<_> = outcomes.iter().filter(|o| o.executed).collect();
    if executed.is_empty() {
        return Err(MetricError::Undefined(format!("{name} with no executed query")));
    }
    Ok(ratio(executed.iter().filter(|o| hit(o)).count(), executed.len()))
}

/// N_correct_count / N_success.
pub fn rca(outcomes: &[EvalOutcome]) -> Result<f64, MetricError> {
    over_successes(outcomes, "RCA", |o| o.count_correct)
}

/// N_matching / N_success.
pub fn rmr(outcomes: &[EvalOutcome]) -> Result<f64, MetricError> {
    over_successes(outcomes, "RMR", |o| o.content_match)
}

/// Harmonic mean of ESR and RMR.
pub fn hra(esr: f64, rmr: f64) -> Result<f64, MetricError> {
    for (name, v) in [("esr", esr), ("rmr", rmr)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(MetricError::Input(format!("{name} = {v} is outside [0, 1]")));
        }
    }
    if esr + rmr == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * esr * rmr / (esr + rmr))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub group: String,
    pub total: usize,
    pub executed: usize,
    pub count_correct: usize,
    pub content_match: usize,
    pub esr: f64,
    /// `None` (n/a) when nothing executed.
    pub rca: Option<f64>,
    pub rmr: Option<f64>,
    pub hra: Option<f64>,
}

impl MetricRow {
    pub fn compute(group: impl Into<String>, outcomes: &[EvalOutcome]) -> Result<Self, MetricError> {
        let esr_v = esr(outcomes)?;
        let rca_v = rca(outcomes).ok();
        let rmr_v = rmr(outcomes).ok();
        Ok(Self {
            group: group.into(),
            total: outcomes.len(),
            executed: outcomes.iter().filter(|o| o.executed).count(),
            count_correct: outcomes.iter().filter(|o| o.executed && o.count_correct).count(),
            content_match: outcomes.iter().filter(|o| o.executed && o.content_match).count(),
            esr: esr_v,
            rca: rca_v,
            rmr: rmr_v,
            hra: rmr_v.map(|r| hra(esr_v, r)).transpose()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub use_templates: bool,
    pub n_templates: usize,
    pub max_attempts: usize,
    pub mode: String,
    pub metric: String,
    pub embedding_model: String,
    pub llm_model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ReportConfig,
    pub overall: MetricRow,
    pub by_entity: Vec<MetricRow>,
    pub by_class: Vec<MetricRow>,
    pub by_complexity: Vec<MetricRow>,
    /// Share of samples with a known target whose first retrieved template
    /// has that target.
    pub retrieval_top1_accuracy: Option<f64>,
    pub outcomes: Vec<EvalOutcome>,
}

fn grouped<K: Ord + ToString>(
    outcomes: &[EvalOutcome],
    key: impl Fn(&EvalOutcome) -> K,
) -> Result<Vec<MetricRow>, MetricError> {
    let mut groups: BTreeMap<K, Vec<EvalOutcome>> = BTreeMap::new();
    for o in outcomes {
        groups.entry(key(o)).or_default().push(o.clone());
    }
    groups
        .into_iter()
        .map(|(k, v)| MetricRow::compute(k.to_string(), &v))
        .collect()
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", v * 100.0))
}

impl Report {
    /// Builds every aggregate from the outcome rows alone.
    pub fn from_outcomes(config: ReportConfig, outcomes: Vec<EvalOutcome>) -> Result<Self, MetricError> {
        let with_target: Vec<_> = outcomes.iter().filter(|o| o.expected_target.is_some()).collect();
        let retrieval_top1_accuracy = (!with_target.is_empty()).then(|| {
            ratio(
                with_target.iter().filter(|o| o.top1_target == o.expected_target).count(),
                with_target.len(),
            )
        });
        Ok(Self {
            overall: MetricRow::compute("overall", &outcomes)?,
            by_entity: grouped(&outcomes, |o| o.entity.clone())?,
            by_class: grouped(&outcomes, |o| o.class)?,
            by_complexity: grouped(&outcomes, |o| o.complexity)?,
            retrieval_top1_accuracy,
            config,
            outcomes,
        })
    }

    /// True when the stored aggregates equal a recomputation from `outcomes`.
    pub fn is_consistent(&self) -> bool {
        Report::from_outcomes(self.config.clone(), self.outcomes.clone()).is_ok_and(|r| &r == self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let headers: Vec<String> = ["group", "n", "executed", "ESR", "RCA", "RMR", "HRA"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let table = |rows: &[MetricRow]| {
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.group.clone(),
                        r.total.to_string(),
                        r.executed.to_string(),
                        pct(Some(r.esr)),
                        pct(r.rca),
                        pct(r.rmr),
                        pct(r.hra),
                    ]
                })
                .collect();
            render_grid(&headers, &cells)
        };
        let c = &self.config;
        let mut out = format!(
            "Generation evaluation: templates={} n_templates={} max_attempts={} mode={} metric={} embedding={} llm={}\n",
            if c.use_templates { "on" } else { "off" },
            c.n_templates,
            c.max_attempts,
            c.mode,
            c.metric,
            c.embedding_model,
            c.llm_model
        );
        out.push_str(&format!(
            "\nOverall\n{}\n\nBy entity\n{}\n\nBy class\n{}\n\nBy complexity\n{}\n",
            table(std::slice::from_ref(&self.overall)),
            table(&self.by_entity),
            table(&self.by_class),
            table(&self.by_complexity)
        ));
        if let Some(acc) = self.retrieval_top1_accuracy {
            out.push_str(&format!("\nRetrieval top-1 target accuracy: {:.3}\n", acc));
        }
        out
    }
}

/// Runs every sample through the pipeline. Per-sample failures are recorded
/// in the outcome rows and never abort the run.
pub async fn run_generation_eval(
    samples: &[EvalSample],
    pipeline: &Pipeline<'_>,
    gold_executor: &dyn SparqlExecutor,
    config: &GenerationConfig,
) -> Result<Report, EvalError> {
    let mut outcomes = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        outcomes.push(evaluate_sample(i, sample, pipeline, gold_executor, config).await);
    }
    let report_config = ReportConfig {
        use_templates: config.use_templates,
        n_templates: config.n_templates,
        max_attempts: config.max_attempts,
        mode: pipeline.index.mode().to_string(),
        metric: pipeline.index.metric().to_string(),
        embedding_model: pipeline.embedder.model().to_string(),
        llm_model: pipeline.llm.model().to_string(),
    };
    Ok(Report::from_outcomes(report_config, outcomes)?)
}

async fn evaluate_sample(
    index: usize,
    sample: &EvalSample,
    pipeline: &Pipeline<'_>,
    gold_executor: &dyn SparqlExecutor,
    config: &GenerationConfig,
) -> EvalOutcome {
    let mut outcome = EvalOutcome {
        sample_id: sample.id.clone().unwrap_or_else(|| format!("s{:03}", index + 1)),
        entity: sample.entity.clone(),
        class: sample.class(),
        complexity: sample.complexity,
        executed: false,
        returned_count: 0,
        count_correct: false,
        content_match: false,
        attempts: 0,
        outcome: None,
        top1_target: None,
        expected_target: sample.target.clone(),
        error: None,
        diagnostic: None,
        trace: None,
    };
    let generated = match pipeline.generate_query(&sample.question, config).await {
        Ok(out) => {
            outcome.top1_target = out.retrieved.first().map(|r| r.template.target.clone());
            out.generated
        }
        Err((retrieved, err)) => {
            outcome.top1_target = retrieved.first().map(|r| r.template.target.clone());
            if let Some(trace) = err.trace() {
                outcome.attempts = trace.attempts.len();
                outcome.outcome = trace.outcome;
                outcome.trace = Some(trace.clone());
            }
            outcome.error = Some(match &err {
                GenerationError::Exhausted { .. } => "EXHAUSTED".to_string(),
                other => other.to_string(),
            });
            return outcome;
        }
    };
    outcome.executed = true;
    outcome.attempts = generated.trace.attempts.len();
    outcome.outcome = generated.trace.outcome;
    outcome.returned_count = generated.results.len() as u64;
    outcome.count_correct = outcome.returned_count == sample.expected_count;
    outcome.trace = Some(generated.trace);

    let expected = match &sample.expected_results {
        Some(rs) => Ok(rs.clone()),
        None => gold_executor
            .execute(&sample.gold_query)
            .await
            .map_err(|e| format!("gold query failed: {e}")),
    };
    match expected {
        Ok(expected) => {
            let m = result_match(&generated.results, &expected);
            outcome.content_match = m.matched;
            outcome.diagnostic = m.diagnostic;
        }
        Err(e) => outcome.diagnostic = Some(e),
    }
    outcome
}
