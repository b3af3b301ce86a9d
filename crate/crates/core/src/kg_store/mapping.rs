//! Row-to-triple mapping rules.
//!
//! A rule pairs a subject IRI template (with `{column}` placeholders) and a
//! predicate with an object source. Rules are applied row-major: for each row,
//! every rule in declaration order.

use std::path::Path;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};

use super::rows::RowSet;
use crate::rdf::{is_absolute_iri, xsd, Term, Triple};

/// Everything except RFC 3986 unreserved characters gets percent-encoded.
const IRI_VALUE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObjectSource {
    /// Typed literal read from a column.
    Column {
        column: String,
        #[serde(default = "default_datatype")]
        datatype: String,
    },
    /// IRI built from a template, used to link to another mapped resource.
    IriTemplate { iri_template: String },
    /// Fixed IRI, or a fixed literal when `datatype` is given or the value is
    /// not an absolute IRI.
    Constant {
        constant: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        datatype: Option<String>,
    },
}

fn default_datatype() -> String {
    xsd::STRING.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRule {
    pub subject_template: String,
    pub predicate: String,
    pub object: ObjectSource,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MappingError {
    #[error("rule {rule}: placeholder '{{{column}}}' names no input column")]
    UnknownColumn { rule: usize, column: String },
    #[error("rule {rule}: malformed template '{template}': {reason}")]
    Template {
        rule: usize,
        template: String,
        reason: String,
    },
    #[error("rule {rule}: '{iri}' is not an absolute IRI")]
    NotAnIri { rule: usize, iri: String },
    #[error("rule {rule}, row {row}: {reason}")]
    Triple {
        rule: usize,
        row: usize,
        reason: String,
    },
    #[error("cannot read mapping file: {0}")]
    Io(String),
    #[error("mapping file is not a JSON array of rules: {0}")]
    Parse(String),
}

pub fn load_mapping(path: impl AsRef<Path>) -> Result<Vec<MappingRule>, MappingError> {
    let text = std::fs::read_to_string(path).map_err(|e| MappingError::Io(e.to_string()))?;
    parse_mapping(&text)
}

pub fn parse_mapping(text: &str) -> Result<Vec<MappingRule>, MappingError> {
    serde_json::from_str(text).map_err(|e| MappingError::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Column(usize),
}

#[derive(Debug, Clone)]
struct CompiledTemplate(Vec<Segment>);

impl CompiledTemplate {
    fn compile(rule: usize, template: &str, rows: &RowSet) -> Result<Self, MappingError> {
        let err = |reason: &str| MappingError::Template {
            rule,
            template: template.to_string(),
            reason: reason.to_string(),
        };
        let mut segments = Vec::new();
        let mut rest = template;
        while let Some(open) = rest.find(['{', '}']) {
            if rest.as_bytes()[open] == b'}' {
                return Err(err("unmatched '}'"));
            }
            if open > 0 {
                segments.push(Segment::Text(rest[..open].to_string()));
            }
            let after = &rest[open + 1..];
            let close = after.find('}').ok_or_else(|| err("unclosed '{'"))?;
            let column = &after[..close];
            if column.is_empty() || column.contains('{') {
                return Err(err("empty or nested placeholder"));
            }
            let idx = rows.column_index(column).ok_or_else(|| MappingError::UnknownColumn {
                rule,
                column: column.to_string(),
            })?;
            segments.push(Segment::Column(idx));
            rest = &after[close + 1..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Text(rest.to_string()));
        }
        Ok(Self(segments))
    }

    /// `None` when a referenced cell is empty.
    fn render(&self, row: &[String]) -> Option<String> {
        let mut out = String::new();
        for seg in &self.0 {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Column(i) => {
                    let cell = &row[*i];
                    if cell.is_empty() {
                        return None;
                    }
                    out.extend(utf8_percent_encode(cell, IRI_VALUE));
                }
            }
        }
        Some(out)
    }

    fn render_allow_empty(&self, row: &[String]) -> String {
        self.0
            .iter()
            .map(|seg| match seg {
                Segment::Text(t) => t.clone(),
                Segment::Column(i) => utf8_percent_encode(&row[*i], IRI_VALUE).to_string(),
            })
            .collect()
    }
}

enum CompiledObject {
    Column(usize, String),
    Template(CompiledTemplate),
    Fixed(Term),
}

struct CompiledRule {
    subject: CompiledTemplate,
    predicate: String,
    object: CompiledObject,
}

fn compile(rows: &RowSet, mapping: &[MappingRule]) -> Result<Vec<CompiledRule>, MappingError> {
    mapping
        .iter()
        .enumerate()
        .map(|(i, rule)| {
            let subject = CompiledTemplate::compile(i, &rule.subject_template, rows)?;
            if !is_absolute_iri(&rule.predicate) {
                return Err(MappingError::NotAnIri {
                    rule: i,
                    iri: rule.predicate.clone(),
                });
            }
            let object = match &rule.object {
                ObjectSource::Column { column, datatype } => {
                    let idx = rows.column_index(column).ok_or_else(|| MappingError::UnknownColumn {
                        rule: i,
                        column: column.clone(),
                    })?;
                    if !is_absolute_iri(datatype) {
                        return Err(MappingError::NotAnIri {
                            rule: i,
                            iri: datatype.clone(),
                        });
                    }
                    CompiledObject::Column(idx, datatype.clone())
                }
                ObjectSource::IriTemplate { iri_template } => {
                    CompiledObject::Template(CompiledTemplate::compile(i, iri_template, rows)?)
                }
                ObjectSource::Constant { constant, datatype } => match datatype {
                    Some(dt) if !is_absolute_iri(dt) => {
                        return Err(MappingError::NotAnIri {
                            rule: i,
                            iri: dt.clone(),
                        })
                    }
                    Some(dt) => CompiledObject::Fixed(Term::literal(constant.clone(), dt.clone())),
                    None if is_absolute_iri(constant) => CompiledObject::Fixed(Term::iri(constant.clone())),
                    None => CompiledObject::Fixed(Term::literal(constant.clone(), xsd::STRING)),
                },
            };
            Ok(CompiledRule {
                subject,
                predicate: rule.predicate.clone(),
                object,
            })
        })
        .collect()
}

/// Maps every row through every rule. A rule is skipped for a row whose
/// object cell (or a cell referenced by an object IRI template) is empty.
pub fn apply_mapping(rows: &RowSet, mapping: &[MappingRule]) -> Result<Vec<Triple>, MappingError> {
    let compiled = compile(rows, mapping)?;
    let mut triples = Vec::with_capacity(rows.len() * compiled.len());
    for (r, row) in rows.rows().iter().enumerate() {
        for (i, rule) in compiled.iter().enumerate() {
            let object = match &rule.object {
                CompiledObject::Column(idx, dt) => {
                    if row[*idx].is_empty() {
                        continue;
                    }
                    Term::literal(row[*idx].clone(), dt.clone())
                }
                CompiledObject::Template(t) => match t.render(row) {
                    Some(iri) => Term::iri(iri),
                    None => continue,
                },
                CompiledObject::Fixed(term) => term.clone(),
            };
            let subject = rule.subject.render_allow_empty(row);
            let triple = Triple::new(subject, rule.predicate.clone(), object).map_err(|e| {
                MappingError::Triple {
                    rule: i,
                    row: r,
                    reason: e.to_string(),
                }
            })?;
            triples.push(triple);
        }
    }
    Ok(triples)
}
