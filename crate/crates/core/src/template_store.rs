//! SPARQL template corpus, its vector index, and retrieval-quality metrics.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedder, EmbeddingError, EmbeddingVector};
use crate::sparql::validate_sparql;
use crate::table::render_grid;
use crate::vector_index::{default_nlist, IndexError, IvfFlatIndex, Metric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateClass {
    #[serde(rename = "SELECT")]
    Select,
    #[serde(rename = "GROUP_BY")]
    GroupBy,
    #[serde(rename = "FILTER")]
    Filter,
}

impl TemplateClass {
    pub const ALL: [TemplateClass; 3] = [TemplateClass::Select, TemplateClass::GroupBy, TemplateClass::Filter];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateClass::Select => "SELECT",
            TemplateClass::GroupBy => "GROUP_BY",
            TemplateClass::Filter => "FILTER",
        }
    }
}

impl fmt::Display for TemplateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateClass {
    type Err = String;

    /// Accepts `GROUP BY` and any letter case as well.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace(' ', "_").as_str() {
            "SELECT" => Ok(TemplateClass::Select),
            "GROUP_BY" => Ok(TemplateClass::GroupBy),
            "FILTER" => Ok(TemplateClass::Filter),
            _ => Err(format!("invalid class '{s}' (expected SELECT, GROUP_BY or FILTER)")),
        }
    }
}

pub fn make_target(class: TemplateClass, entity: &str) -> String {
    format!("{class}|{entity}")
}

/// Class component of a `CLASS|Entity` target.
pub fn target_class(target: &str) -> &str {
    target.split_once('|').map_or(target, |(c, _)| c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub class: TemplateClass,
    pub entity: String,
    #[serde(default)]
    pub target: String,
    pub sparql_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_question: Option<String>,
}

impl Template {
    /// Fills an empty target and checks every invariant.
    fn normalize(&mut self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.entity.trim().is_empty() {
            return Err(format!("template '{}': empty entity", self.id));
        }
        let expected = make_target(self.class, &self.entity);
        if self.target.is_empty() {
            self.target = expected;
        } else if self.target != expected {
            return Err(format!(
                "template '{}': target '{}' does not equal '{expected}'",
                self.id, self.target
            ));
        }
        if let Err(issue) = validate_sparql(&substitute_dummies(&self.sparql_text)) {
            return Err(format!("template '{}': malformed SPARQL: {issue}", self.id));
        }
        Ok(())
    }

    pub fn has_description(&self) -> bool {
        self.description.as_deref().is_some_and(|d| !d.trim().is_empty())
    }
}

/// Spans of `{{name}}` placeholders in `text` (name is `[A-Za-z0-9_]+`).
pub fn placeholders(text: &str) -> Vec<(usize, usize, &str)> {
    let bytes = text.as_bytes();
    let mut found = Vec::new();
    let mut i = 0;
    while i + 1 < bytes.len() {
        if bytes[i] == b'{' && bytes[i + 1] == b'{' {
            let start = i + 2;
            let mut j = start;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            if j > start && text[j..].starts_with("}}") {
                found.push((i, j + 2, &text[start..j]));
                i = j + 2;
                continue;
            }
        }
        i += 1;
    }
    found
}

fn inside_string(prefix: &str) -> bool {
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for c in prefix.chars() {
        if escaped {
            escaped = false;
            continue;
        }
        match (quote, c) {
            (Some(_), '\\') => escaped = true,
            (Some(q), c) if c == q => quote = None,
            (None, '"' | '\'') => quote = Some(c),
            _ => {}
        }
    }
    quote.is_some()
}

fn inside_iri(prefix: &str) -> bool {
    for c in prefix.chars().rev() {
        match c {
            '<' => return true,
            '>' | ' ' | '\t' | '\n' | '\r' => return false,
            _ => {}
        }
    }
    false
}

/// Replaces each placeholder with a token that keeps the query well formed:
/// `dummy` where a name, IRI or string continues, `0` in term position.
pub fn substitute_dummies(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (start, end, _) in placeholders(text) {
        let prefix = &text[..start];
        out.push_str(&text[last..start]);
        let glued = prefix
            .chars()
            .next_back()
            .is_some_and(|c| c.is_alphanumeric() || matches!(c, '_' | ':' | '?' | '<'));
        if glued || inside_string(prefix) || inside_iri(prefix) {
            out.push_str("dummy");
        } else {
            out.push('0');
        }
        last = end;
    }
    out.push_str(&text[last..]);
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TemplateError {
    #[error("template corpus rejected:\n  {}", .0.join("\n  "))]
    Load(Vec<String>),
    #[error("cannot read template corpus: {0}")]
    Io(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{0}")]
    State(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Parses a JSONL corpus. Every offending line is reported, not only the first.
pub fn parse_templates(text: &str) -> Result<Vec<Template>, TemplateError> {
    let mut templates = Vec::new();
    let mut offenders = Vec::new();
    let mut seen = HashSet::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut t: Template = match serde_json::from_str(line) {
            Ok(t) => t,
            Err(e) => {
                offenders.push(format!("line {}: {e}", no + 1));
                continue;
            }
        };
        if let Err(msg) = t.normalize() {
            offenders.push(format!("line {}: {msg}", no + 1));
            continue;
        }
        if !seen.insert(t.id.clone()) {
            offenders.push(format!("line {}: duplicate id '{}'", no + 1, t.id));
            continue;
        }
        templates.push(t);
    }
    if offenders.is_empty() {
        Ok(templates)
    } else {
        Err(TemplateError::Load(offenders))
    }
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<Template>, TemplateError> {
    let text = std::fs::read_to_string(path).map_err(|e| TemplateError::Io(e.to_string()))?;
    parse_templates(&text)
}

pub fn templates_to_jsonl(templates: &[Template]) -> String {
    let mut out = String::new();
    for t in templates {
        out.push_str(&serde_json::to_string(t).expect("template serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EmbeddingMode {
    #[default]
    Direct,
    Description,
    Combined,
}

impl EmbeddingMode {
    pub const ALL: [EmbeddingMode; 3] = [EmbeddingMode::Direct, EmbeddingMode::Description, EmbeddingMode::Combined];
}

impl fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingMode::Direct => "DIRECT",
            EmbeddingMode::Description => "DESCRIPTION",
            EmbeddingMode::Combined => "COMBINED",
        })
    }
}

impl FromStr for EmbeddingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "DIRECT" => Ok(EmbeddingMode::Direct),
            "DESCRIPTION" => Ok(EmbeddingMode::Description),
            "COMBINED" | "COMB" => Ok(EmbeddingMode::Combined),
            _ => Err(format!("unknown embedding mode '{s}' (expected direct, description or combined)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingText<'a> {
    Single(&'a str),
    Pair { direct: &'a str, description: &'a str },
}

pub fn template_embedding_text(t: &Template, mode: EmbeddingMode) -> Result<EmbeddingText<'_>, TemplateError> {
    let description = || {
        t.description
            .as_deref()
            .filter(|d| !d.trim().is_empty())
            .ok_or_else(|| TemplateError::Input(format!("template '{}' has no description; {mode} mode needs one", t.id)))
    };
    Ok(match mode {
        EmbeddingMode::Direct => EmbeddingText::Single(&t.sparql_text),
        EmbeddingMode::Description => EmbeddingText::Single(description()?),
        EmbeddingMode::Combined => EmbeddingText::Pair {
            direct: &t.sparql_text,
            description: description()?,
        },
    })
}

/// normalize(normalize(a) + normalize(b)).
pub fn combine_embeddings(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<EmbeddingVector, TemplateError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimMismatch {
            expected: a.dim(),
            got: b.dim(),
        }
        .into());
    }
    let zero = || TemplateError::Input("cannot combine a zero embedding".into());
    let na = a.normalized().ok_or_else(zero)?;
    let nb = b.normalized().ok_or_else(zero)?;
    let sum: Vec<f64> = na.values().iter().zip(nb.values()).map(|(x, y)| x + y).collect();
    EmbeddingVector::new(sum)?.normalized().ok_or_else(zero)
}

pub async fn embed_template(
    t: &Template,
    mode: EmbeddingMode,
    embedder: &dyn Embedder,
) -> Result<EmbeddingVector, TemplateError> {
    match template_embedding_text(t, mode)? {
        EmbeddingText::Single(text) => Ok(embedder.embed(text).await?),
        EmbeddingText::Pair { direct, description } => {
            let a = embedder.embed(direct).await?;
            let b = embedder.embed(description).await?;
            combine_embeddings(&a, &b)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    pub mode: EmbeddingMode,
    pub metric: Metric,
    /// Defaults to ⌈√N⌉.
    pub nlist: Option<usize>,
    /// Defaults to nlist (exhaustive probe).
    pub nprobe: Option<usize>,
    pub seed: u64,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            mode: EmbeddingMode::Direct,
            metric: Metric::Ip,
            nlist: None,
            nprobe: None,
            seed: 42,
        }
    }
}

pub const DEFAULT_N_TEMPLATES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedTemplate {
    pub template: Template,
    pub score: f64,
}

/// Corpus snapshot together with its vector index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateIndex {
    mode: EmbeddingMode,
    metric: Metric,
    embedding_model: String,
    nprobe: usize,
    templates: Vec<Template>,
    ivf: Option<IvfFlatIndex>,
}

impl TemplateIndex {
    pub async fn build(
        templates: Vec<Template>,
        embedder: &dyn Embedder,
        params: IndexParams,
    ) -> Result<Self, TemplateError> {
        let mut items = Vec::with_capacity(templates.len());
        for t in &templates {
            items.push((t.id.clone(), embed_template(t, params.mode, embedder).await?));
        }
        let ivf = if items.is_empty() {
            None
        } else {
            let nlist = params.nlist.unwrap_or_else(|| default_nlist(items.len()));
            let (ivf, report) = IvfFlatIndex::build(&items, nlist, params.metric, params.seed)?;
            for w in &report.warnings {
                tracing::warn!("{w}");
            }
            Some(ivf)
        };
        let nlist = ivf.as_ref().map_or(1, IvfFlatIndex::nlist);
        let nprobe = params.nprobe.unwrap_or(nlist);
        if nprobe == 0 || nprobe > nlist {
            return Err(TemplateError::Input(format!("nprobe must be in 1..={nlist}, got {nprobe}")));
        }
        Ok(Self {
            mode: params.mode,
            metric: params.metric,
            embedding_model: embedder.model().to_string(),
            nprobe,
            templates,
            ivf,
        })
    }

    pub fn mode(&self) -> EmbeddingMode {
        self.mode
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn embedding_model(&self) -> &str {
        &self.embedding_model
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn ivf(&self) -> Option<&IvfFlatIndex> {
        self.ivf.as_ref()
    }

    /// Top-n templates for `question`, best first.
    pub async fn retrieve(
        &self,
        question: &str,
        n: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<RetrievedTemplate>, TemplateError> {
        if n == 0 {
            return Err(TemplateError::Input("n must be at least 1".into()));
        }
        let Some(ivf) = &self.ivf else {
            return Err(TemplateError::State(
                "no template index is built; load a corpus and run `templates index`".into(),
            ));
        };
        if embedder.model() != self.embedding_model {
            return Err(TemplateError::State(format!(
                "index was built with embedding model '{}' but '{}' is configured; rebuild the index",
                self.embedding_model,
                embedder.model()
            )));
        }
        let query = embedder.embed(question).await?;
        let by_id: HashMap<&str, &Template> = self.templates.iter().map(|t| (t.id.as_str(), t)).collect();
        let hits = ivf.search(&query, n.min(self.templates.len()), self.nprobe)?;
        Ok(hits
            .into_iter()
            .map(|h| RetrievedTemplate {
                template: by_id[h.id.as_str()].clone(),
                score: h.score,
            })
            .collect())
    }

    /// Checks that the index was built under the requested configuration.
    pub fn ensure_config(&self, mode: EmbeddingMode, metric: Metric) -> Result<(), TemplateError> {
        if self.mode != mode || self.metric != metric {
            return Err(TemplateError::State(format!(
                "index was built for ({}, {}) but ({mode}, {metric}) was requested; rebuild with `templates index --mode {} --metric {}`",
                self.mode,
                self.metric,
                mode.to_string().to_lowercase(),
                metric.to_string().to_lowercase()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TemplateError> {
        let json = serde_json::to_string(self).map_err(|e| TemplateError::Io(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| TemplateError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|e| TemplateError::Io(e.to_string()))?;
        let index: Self = serde_json::from_str(&text).map_err(|e| TemplateError::Io(e.to_string()))?;
        let ids: HashSet<&str> = index.templates.iter().map(|t| t.id.as_str()).collect();
        let indexed = index.ivf.as_ref().map_or(0, |ivf| ivf.len());
        let consistent = indexed == ids.len()
            && index
                .ivf
                .iter()
                .flat_map(|ivf| ivf.lists().iter().flatten())
                .all(|e| ids.contains(e.id.as_str()));
        if !consistent {
            return Err(TemplateError::State("index snapshot does not match its template list".into()));
        }
        Ok(index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedItem {
    pub template_id: String,
    pub target: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub question: String,
    pub true_target: String,
    pub retrieved: Vec<RetrievedItem>,
}

impl RetrievalRecord {
    pub fn from_retrieved(question: &str, true_target: &str, retrieved: &[RetrievedTemplate]) -> Self {
        Self {
            question: question.to_string(),
            true_target: true_target.to_string(),
            retrieved: retrieved
                .iter()
                .map(|r| RetrievedItem {
                    template_id: r.template.id.clone(),
                    target: r.template.target.clone(),
                    score: r.score,
                })
                .collect(),
        }
    }

    /// Same record keeping only the first `n` retrieved items.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            retrieved: self.retrieved.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("invalid metric input: {0}")]
    Input(String),
}

/// Micro TP/(TP+FP) over every retrieved item.
pub fn retrieval_accuracy(records: &[RetrievalRecord]) -> Result<f64, MetricError> {
    if records.is_empty() {
        return Err(MetricError::Undefined("no retrieval records".into()));
    }
    let mut tp = 0usize;
    let mut total = 0usize;
    for r in records {
        if r.retrieved.is_empty() {
            return Err(MetricError::Input(format!("record '{}' retrieved nothing", r.question)));
        }
        total += r.retrieved.len();
        tp += r.retrieved.iter().filter(|i| i.target == r.true_target).count();
    }
    Ok(tp as f64 / total as f64)
}

/// Standard multiclass MCC over a square matrix (rows = true, columns =
/// predicted). Zero when either denominator factor vanishes.
pub fn multiclass_mcc(confusion: &[Vec<i64>]) -> Result<f64, MetricError> {
    let k = confusion.len();
    if confusion.iter().any(|row| row.len() != k) {
        return Err(MetricError::Input("confusion matrix is not square".into()));
    }
    if confusion.iter().flatten().any(|&v| v < 0) {
        return Err(MetricError::Input("confusion matrix has a negative entry".into()));
    }
    let s: f64 = confusion.iter().flatten().map(|&v| v as f64).sum();
    if s == 0.0 {
        return Err(MetricError::Undefined("confusion matrix is empty".into()));
    }
    let c: f64 = (0..k).map(|i| confusion[i][i] as f64).sum();
    let t: Vec<f64> = confusion.iter().map(|row| row.iter().map(|&v| v as f64).sum()).collect();
    let p: Vec<f64> = (0..k).map(|j| confusion.iter().map(|row| row[j] as f64).sum()).collect();
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|v| v * v).sum();
    let tt: f64 = t.iter().map(|v| v * v).sum();
    let left = s * s - pp;
    let right = s * s - tt;
    if left == 0.0 || right == 0.0 {
        return Ok(0.0);
    }
    Ok((c * s - pt) / (left * right).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ConfusionLevel {
    Class,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<i64>>,
}

impl ConfusionMatrix {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)> + Clone) -> Self {
        let labels: Vec<String> = pairs
            .clone()
            .into_iter()
            .flat_map(|(t, p)| [t, p])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_string)
            .collect();
        Self::with_labels(labels, pairs)
    }

    /// Fixed label order; pairs with unknown labels are ignored.
    pub fn with_labels<'a>(labels: Vec<String>, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let pos: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut counts = vec![vec![0; labels.len()]; labels.len()];
        for (t, p) in pairs {
            if let (Some(&i), Some(&j)) = (pos.get(t), pos.get(p)) {
                counts[i][j] += 1;
            }
        }
        Self { labels, counts }
    }

    pub fn mcc(&self) -> Result<f64, MetricError> {
        multiclass_mcc(&self.counts)
    }

    pub fn row_total(&self, i: usize) -> i64 {
        self.counts[i].iter().sum()
    }

    pub fn to_text(&self) -> String {
        let mut headers = vec!["true \\ predicted".to_string()];
        headers.extend(self.labels.iter().cloned());
        let rows: Vec<Vec<String>> = self
            .labels
            .iter()
            .zip(&self.counts)
            .map(|(l, row)| std::iter::once(l.clone()).chain(row.iter().map(i64::to_string)).collect())
            .collect();
        render_grid(&headers, &rows)
    }
}

/// Top-1 confusion; labels sorted lexicographically.
pub fn build_confusion(records: &[RetrievalRecord], level: ConfusionLevel) -> Result<ConfusionMatrix, MetricError> {
    if records.is_empty() {
        return Err(MetricError::Undefined("no retrieval records".into()));
    }
    let label = |target: &str| -> String {
        match level {
            ConfusionLevel::Target => target.to_string(),
            ConfusionLevel::Class => target_class(target).to_string(),
        }
    };
    let mut pairs = Vec::with_capacity(records.len());
    for r in records {
        let top = r
            .retrieved
            .first()
            .ok_or_else(|| MetricError::Input(format!("record '{}' retrieved nothing", r.question)))?;
        pairs.push((label(&r.true_target), label(&top.target)));
    }
    Ok(ConfusionMatrix::from_pairs(pairs.iter().map(|(t, p)| (t.as_str(), p.as_str()))))
}

/// One row of the retrieval-eval CSV (`Question,Query,Class,Entity,Target`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSample {
    pub question: String,
    pub query: String,
    pub class: TemplateClass,
    pub entity: String,
    pub target: String,
}

#[derive(Debug, Deserialize)]
struct RawRetrievalRow {
    #[serde(rename = "Question")]
    question: String,
    #[serde(rename = "Query", default)]
    query: String,
    #[serde(rename = "Class")]
    class: String,
    #[serde(rename = "Entity")]
    entity: String,
    #[serde(rename = "Target", default)]
    target: String,
}

pub fn parse_retrieval_dataset(reader: impl std::io::Read) -> Result<Vec<RetrievalSample>, TemplateError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut samples = Vec::new();
    let mut offenders = Vec::new();
    for (i, row) in rdr.deserialize::<RawRetrievalRow>().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                offenders.push(format!("row {line}: {e}"));
                continue;
            }
        };
        let class = match row.class.parse::<TemplateClass>() {
            Ok(c) => c,
            Err(e) => {
                offenders.push(format!("row {line}: {e}"));
                continue;
            }
        };
        let expected = make_target(class, &row.entity);
        if row.question.is_empty() || row.entity.is_empty() {
            offenders.push(format!("row {line}: empty question or entity"));
        } else if !row.target.is_empty() && row.target.replace(' ', "_") != expected {
            offenders.push(format!("row {line}: target '{}' does not equal '{expected}'", row.target));
        } else {
            samples.push(RetrievalSample {
                question: row.question,
                query: row.query,
                class,
                entity: row.entity,
                target: expected,
            });
        }
    }
    if !offenders.is_empty() {
        return Err(TemplateError::Load(offenders));
    }
    if samples.is_empty() {
        return Err(TemplateError::Input("retrieval dataset has no rows".into()));
    }
    Ok(samples)
}

pub fn load_retrieval_dataset(path: impl AsRef<Path>) -> Result<Vec<RetrievalSample>, TemplateError> {
    let file = std::fs::File::open(path).map_err(|e| TemplateError::Io(e.to_string()))?;
    parse_retrieval_dataset(file)
}

/// Retrieves `n_max` templates per sample.
pub async fn collect_records(
    index: &TemplateIndex,
    samples: &[RetrievalSample],
    n_max: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<RetrievalRecord>, TemplateError> {
    let mut records = Vec::with_capacity(samples.len());
    for s in samples {
        let retrieved = index.retrieve(&s.question, n_max, embedder).await?;
        records.push(RetrievalRecord::from_retrieved(&s.question, &s.target, &retrieved));
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalGridRow {
    pub model: String,
    pub mode: EmbeddingMode,
    pub metric: Metric,
    pub n: usize,
    pub accuracy: f64,
    /// Top-1 MCC over targets.
    pub mcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub samples: usize,
    pub grid: Vec<RetrievalGridRow>,
    pub class_confusion: ConfusionMatrix,
    pub target_confusion: ConfusionMatrix,
}

impl RetrievalReport {
    pub fn to_text(&self) -> String {
        let headers: Vec<String> = ["model", "mode", "metric", "n", "accuracy", "mcc"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let rows: Vec<Vec<String>> = self
            .grid
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    r.mode.to_string(),
                    r.metric.to_string(),
                    r.n.to_string(),
                    format!("{:.3}", r.accuracy),
                    format!("{:.3}", r.mcc),
                ]
            })
            .collect();
        format!(
            "Retrieval evaluation over {} questions\n{}\n\nClass confusion (top-1)\n{}\n",
            self.samples,
            render_grid(&headers, &rows),
            self.class_confusion.to_text()
        )
    }
}

/// Accuracy and MCC for each `n`, reusing one retrieval of `max(ns)` items
/// per question. Confusion matrices come from the top-1 item.
pub async fn run_retrieval_eval(
    index: &TemplateIndex,
    samples: &[RetrievalSample],
    ns: &[usize],
    embedder: &dyn Embedder,
) -> Result<RetrievalReport, TemplateError> {
    let n_max = ns.iter().copied().max().ok_or_else(|| TemplateError::Input("no n values given".into()))?;
    let records = collect_records(index, samples, n_max, embedder).await?;
    let metric_err = |e: MetricError| TemplateError::Input(e.to_string());
    let class_confusion = build_confusion(&records, ConfusionLevel::Class).map_err(metric_err)?;
    let target_confusion = build_confusion(&records, ConfusionLevel::Target).map_err(metric_err)?;
    let mcc = target_confusion.mcc().map_err(metric_err)?;
    let mut grid = Vec::new();
    for &n in ns {
        let truncated: Vec<_> = records.iter().map(|r| r.truncated(n)).collect();
        grid.push(RetrievalGridRow {
            model: index.embedding_model().to_string(),
            mode: index.mode(),
            metric: index.metric(),
            n,
            accuracy: retrieval_accuracy(&truncated).map_err(metric_err)?,
            mcc,
        });
    }
    Ok(RetrievalReport {
        samples: samples.len(),
        grid,
        class_confusion,
        target_confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::MockEmbedder;

    fn template(id: &str, class: TemplateClass, entity: &str, sparql: &str) -> Template {
        Template {
            id: id.into(),
            class,
            entity: entity.into(),
            target: String::new(),
            sparql_text: sparql.into(),
            description: Some(format!("description of {id}")),
            example_question: None,
        }
    }

    #[test]
    fn dummy_substitution_by_context() {
        let q = r#"PREFIX ioe: <http://e/#> SELECT ?v WHERE { ?s ioe:{{prop}} ?v . FILTER(?v > {{min}} && STR(?s) = "{{name}}") } LIMIT {{k}}"#;
        let out = substitute_dummies(q);
        assert_eq!(
            out,
            r#"PREFIX ioe: <http://e/#> SELECT ?v WHERE { ?s ioe:dummy ?v . FILTER(?v > 0 && STR(?s) = "dummy") } LIMIT 0"#
        );
        assert!(validate_sparql(&out).is_ok());
        assert_eq!(substitute_dummies("<http://e/{{id}}>"), "<http://e/dummy>");
    }

    #[test]
    fn nested_group_is_not_a_placeholder() {
        assert!(placeholders("SELECT * WHERE {{?s ?p ?o}}").is_empty());
    }

    #[test]
    fn parse_fills_target_and_rejects_offenders() {
        let good = r#"{"id":"t1","class":"GROUP_BY","entity":"Sensor","sparql_text":"SELECT ?s WHERE { ?s ?p ?o }"}"#;
        let ts = parse_templates(good).unwrap();
        assert_eq!(ts[0].target, "GROUP_BY|Sensor");

        let bad = format!(
            "{good}\n{good}\n{}\n{}",
            r#"{"id":"t2","class":"JOIN","entity":"Sensor","sparql_text":"SELECT ?s WHERE { ?s ?p ?o }"}"#,
            r#"{"id":"t3","class":"SELECT","entity":"Sensor","sparql_text":"SELECT ?s WHERE { ?s ?p ?o"}"#
        );
        let TemplateError::Load(offenders) = parse_templates(&bad).unwrap_err() else {
            panic!("expected load error");
        };
        assert_eq!(offenders.len(), 3);
        assert!(offenders[0].contains("duplicate id 't1'"));
        assert!(offenders[2].contains("malformed SPARQL"));
    }

    #[test]
    fn empty_corpus() {
        assert!(parse_templates("").unwrap().is_empty());
    }

    #[test]
    fn mismatched_target_rejected() {
        let line = r#"{"id":"t","class":"SELECT","entity":"Sensor","target":"FILTER|Sensor","sparql_text":"SELECT ?s WHERE { ?s ?p ?o }"}"#;
        assert!(parse_templates(line).is_err());
    }

    #[test]
    fn embedding_text_per_mode() {
        let mut t = template("t", TemplateClass::Select, "Sensor", "SELECT ?s WHERE { ?s ?p ?o }");
        assert_eq!(
            template_embedding_text(&t, EmbeddingMode::Direct).unwrap(),
            EmbeddingText::Single("SELECT ?s WHERE { ?s ?p ?o }")
        );
        t.description = Some("  ".into());
        assert!(template_embedding_text(&t, EmbeddingMode::Description).is_err());
        assert!(template_embedding_text(&t, EmbeddingMode::Combined).is_err());
    }

    #[test]
    fn combined_of_orthogonal_units() {
        let a = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let b = EmbeddingVector::new(vec![0.0, 1.0]).unwrap();
        let c = combine_embeddings(&a, &b).unwrap();
        let h = 2f64.sqrt() / 2.0;
        assert!((c.values()[0] - h).abs() < 1e-15 && (c.values()[1] - h).abs() < 1e-15);
    }

    #[test]
    fn accuracy_examples() {
        let rec = |hits: &[bool]| RetrievalRecord {
            question: "q".into(),
            true_target: "SELECT|A".into(),
            retrieved: hits
                .iter()
                .map(|&h| RetrievedItem {
                    template_id: "t".into(),
                    target: if h { "SELECT|A".into() } else { "FILTER|A".into() },
                    score: 0.0,
                })
                .collect(),
        };
        assert_eq!(retrieval_accuracy(&[rec(&[true, false]), rec(&[false, true])]).unwrap(), 0.5);
        assert_eq!(retrieval_accuracy(&[rec(&[true, true])]).unwrap(), 1.0);
        assert!(matches!(retrieval_accuracy(&[]), Err(MetricError::Undefined(_))));
    }

    #[test]
    fn mcc_edge_cases() {
        assert_eq!(multiclass_mcc(&[vec![3, 0], vec![0, 5]]).unwrap(), 1.0);
        assert_eq!(multiclass_mcc(&[vec![0, 4], vec![0, 6]]).unwrap(), 0.0);
        assert!(multiclass_mcc(&[vec![1, 2]]).is_err());
        assert!(multiclass_mcc(&[vec![-1]]).is_err());
        assert!(matches!(multiclass_mcc(&[vec![0]]), Err(MetricError::Undefined(_))));
    }

    #[test]
    fn confusion_hand_tally() {
        let rec = |t: &str, p: &str| RetrievalRecord {
            question: "q".into(),
            true_target: t.into(),
            retrieved: vec![RetrievedItem {
                template_id: "x".into(),
                target: p.into(),
                score: 1.0,
            }],
        };
        let records = vec![
            rec("SELECT|A", "SELECT|A"),
            rec("SELECT|A", "FILTER|A"),
            rec("FILTER|B", "FILTER|B"),
            rec("GROUP_BY|A", "SELECT|B"),
            rec("GROUP_BY|B", "GROUP_BY|B"),
        ];
        let m = build_confusion(&records, ConfusionLevel::Class).unwrap();
        assert_eq!(m.labels, ["FILTER", "GROUP_BY", "SELECT"]);
        assert_eq!(m.counts, vec![vec![1, 0, 0], vec![0, 1, 1], vec![1, 0, 1]]);
    }

    #[test]
    fn dataset_parsing() {
        let csv = "Question,Query,Class,Entity,Target\nWhich sensors?,SELECT,GROUP BY,Sensor,GROUP_BY|Sensor\n";
        let rows = parse_retrieval_dataset(csv.as_bytes()).unwrap();
        assert_eq!(rows[0].target, "GROUP_BY|Sensor");
        assert!(parse_retrieval_dataset("Question,Query,Class,Entity,Target\n".as_bytes()).is_err());
        assert!(parse_retrieval_dataset("Question,Query,Class,Entity,Target\nq,x,JOIN,S,\n".as_bytes()).is_err());
    }

    #[tokio::test]
    async fn retrieval_ranks_self_match_first() {
        let embedder = MockEmbedder::new(64, 42).unwrap();
        let corpus = vec![
            template("a", TemplateClass::Select, "Sensor", "SELECT ?sensor ?model WHERE { ?sensor ?p ?model }"),
            template("b", TemplateClass::Filter, "Platform", "SELECT ?platform WHERE { ?platform ?p ?loc FILTER(?loc = 0) }"),
            template("c", TemplateClass::GroupBy, "Observation", "SELECT ?obs (COUNT(?v) AS ?n) WHERE { ?obs ?p ?v } GROUP BY ?obs"),
        ];
        let index = TemplateIndex::build(corpus.clone(), &embedder, IndexParams::default()).await.unwrap();
        let hits = index.retrieve(&corpus[1].sparql_text, 2, &embedder).await.unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].template.id, "b");
        assert!(hits[0].score >= hits[1].score);
        assert_eq!(index.retrieve("x", 10, &embedder).await.unwrap().len(), 3);

        let single = TemplateIndex::build(corpus[..1].to_vec(), &embedder, IndexParams::default()).await.unwrap();
        assert_eq!(single.retrieve("anything", 1, &embedder).await.unwrap()[0].template.id, "a");
    }

    #[tokio::test]
    async fn empty_index_is_a_state_error() {
        let embedder = MockEmbedder::new(8, 42).unwrap();
        let index = TemplateIndex::build(vec![], &embedder, IndexParams::default()).await.unwrap();
        assert!(matches!(index.retrieve("q", 2, &embedder).await, Err(TemplateError::State(_))));
        assert!(index.ensure_config(EmbeddingMode::Direct, Metric::Ip).is_ok());
        assert!(matches!(
            index.ensure_config(EmbeddingMode::Combined, Metric::Ip),
            Err(TemplateError::State(_))
        ));
    }

    #[tokio::test]
    async fn snapshot_round_trip() {
        let embedder = MockEmbedder::new(16, 42).unwrap();
        let corpus: Vec<_> = (0..10)
            .map(|i| template(&format!("t{i}"), TemplateClass::Select, "Sensor", &format!("SELECT ?s{i} WHERE {{ ?s{i} ?p ?o }}")))
            .collect();
        let index = TemplateIndex::build(corpus, &embedder, IndexParams::default()).await.unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("templates.json");
        index.save(&path).unwrap();
        let loaded = TemplateIndex::load(&path).unwrap();
        assert_eq!(loaded, index);
    }
}
