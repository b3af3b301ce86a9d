use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mapping::{MappingRule, ObjectSource};
use crate::rdf::{xsd, RDF_TYPE};

pub const IOE_NS: &str = "http://example.org/ioe#";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyClass {
    pub iri: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyProperty {
    pub iri: String,
    pub label: String,
    pub domain: String,
    pub range: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OntologyError {
    #[error("property '{property}' has undeclared domain '{domain}'")]
    Domain { property: String, domain: String },
    #[error("property '{property}' has range '{range}' that is neither a declared class nor an XSD datatype")]
    Range { property: String, range: String },
    #[error("cannot read ontology: {0}")]
    Io(String),
    #[error("malformed ontology file: {0}")]
    Parse(String),
}

/// Classes and properties the generator is told about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologySchema {
    #[serde(default)]
    pub prefixes: BTreeMap<String, String>,
    pub classes: Vec<OntologyClass>,
    pub properties: Vec<OntologyProperty>,
}

/// Predicate or class used by a mapping but missing from the schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentIssue {
    pub rule: usize,
    pub message: String,
}

impl OntologySchema {
    pub fn new(
        prefixes: BTreeMap<String, String>,
        classes: Vec<OntologyClass>,
        properties: Vec<OntologyProperty>,
    ) -> Result<Self, OntologyError> {
        let schema = Self {
            prefixes,
            classes,
            properties,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, OntologyError> {
        let text = std::fs::read_to_string(path).map_err(|e| OntologyError::Io(e.to_string()))?;
        let schema: Self = serde_json::from_str(&text).map_err(|e| OntologyError::Parse(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<(), OntologyError> {
        let classes: HashSet<&str> = self.classes.iter().map(|c| c.iri.as_str()).collect();
        for p in &self.properties {
            if !classes.contains(p.domain.as_str()) {
                return Err(OntologyError::Domain {
                    property: p.iri.clone(),
                    domain: p.domain.clone(),
                });
            }
            if !classes.contains(p.range.as_str()) && !p.range.starts_with(xsd::NS) {
                return Err(OntologyError::Range {
                    property: p.iri.clone(),
                    range: p.range.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn has_class(&self, iri: &str) -> bool {
        self.classes.iter().any(|c| c.iri == iri)
    }

    pub fn property(&self, iri: &str) -> Option<&OntologyProperty> {
        self.properties.iter().find(|p| p.iri == iri)
    }

    /// Shortest prefixed form of `iri` under the declared prefixes.
    pub fn compact(&self, iri: &str) -> String {
        self.prefixes
            .iter()
            .filter_map(|(prefix, ns)| iri.strip_prefix(ns.as_str()).map(|local| format!("{prefix}:{local}")))
            .min_by_key(String::len)
            .unwrap_or_else(|| format!("<{iri}>"))
    }

    /// Compact listing used inside prompts. Empty when no class exists.
    pub fn serialized_text(&self) -> String {
        if self.classes.is_empty() {
            return String::new();
        }
        let mut out = String::new();
        for (prefix, ns) in &self.prefixes {
            let _ = writeln!(out, "PREFIX {prefix}: <{ns}>");
        }
        out.push_str("Classes:\n");
        for c in &self.classes {
            let _ = writeln!(out, "- {} ({})", self.compact(&c.iri), c.label);
        }
        out.push_str("Properties:\n");
        for p in &self.properties {
            let _ = writeln!(
                out,
                "- {} ({}): {} -> {}",
                self.compact(&p.iri),
                p.label,
                self.compact(&p.domain),
                self.compact(&p.range)
            );
        }
        out
    }

    /// Checks that mapped predicates (and `rdf:type` classes) exist in the schema.
    pub fn check_alignment(&self, mapping: &[MappingRule]) -> Vec<AlignmentIssue> {
        let mut issues = Vec::new();
        for (i, rule) in mapping.iter().enumerate() {
            if rule.predicate == RDF_TYPE {
                if let ObjectSource::Constant { constant, datatype: None } = &rule.object {
                    if !self.has_class(constant) {
                        issues.push(AlignmentIssue {
                            rule: i,
                            message: format!("class '{constant}' is not declared in the ontology"),
                        });
                    }
                }
            } else if self.property(&rule.predicate).is_none() {
                issues.push(AlignmentIssue {
                    rule: i,
                    message: format!("predicate '{}' is not declared in the ontology", rule.predicate),
                });
            }
        }
        issues
    }

    /// Four-entity sensor ontology: Observation, Sensor, ObservableProperty,
    /// Platform.
    pub fn mini_ioe() -> Self {
        let ioe = |local: &str| format!("{IOE_NS}{local}");
        let class = |local: &str| OntologyClass {
            iri: ioe(local),
            label: local.to_string(),
        };
        let prop = |local: &str, label: &str, domain: &str, range: String| OntologyProperty {
            iri: ioe(local),
            label: label.to_string(),
            domain: ioe(domain),
            range,
        };
        let mut prefixes = BTreeMap::new();
        prefixes.insert("ioe".to_string(), IOE_NS.to_string());
        prefixes.insert("xsd".to_string(), xsd::NS.to_string());
        Self::new(
            prefixes,
            vec![
                class("Observation"),
                class("Sensor"),
                class("ObservableProperty"),
                class("Platform"),
            ],
            vec![
                prop("madeBySensor", "made by sensor", "Observation", ioe("Sensor")),
                prop("observedProperty", "observed property", "Observation", ioe("ObservableProperty")),
                prop("hasSimpleResult", "result value", "Observation", xsd::DOUBLE.into()),
                prop("resultTime", "result time", "Observation", xsd::DATE_TIME.into()),
                prop("isHostedBy", "hosted by platform", "Sensor", ioe("Platform")),
                prop("observes", "observes property", "Sensor", ioe("ObservableProperty")),
                prop("sensorModel", "sensor model", "Sensor", xsd::STRING.into()),
                prop("installedOn", "installation date", "Sensor", xsd::DATE.into()),
                prop("propertyName", "property name", "ObservableProperty", xsd::STRING.into()),
                prop("unit", "unit of measure", "ObservableProperty", xsd::STRING.into()),
                prop("platformName", "platform name", "Platform", xsd::STRING.into()),
                prop("location", "location", "Platform", xsd::STRING.into()),
            ],
        )
        .expect("built-in ontology is consistent")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mini_ontology_shape() {
        let o = OntologySchema::mini_ioe();
        assert_eq!(o.classes.len(), 4);
        let text = o.serialized_text();
        assert!(text.contains("PREFIX ioe: <http://example.org/ioe#>"));
        assert!(text.contains("- ioe:madeBySensor (made by sensor): ioe:Observation -> ioe:Sensor"));
        assert!(text.contains("ioe:resultTime (result time): ioe:Observation -> xsd:dateTime"));
    }

    #[test]
    fn empty_schema_has_empty_text() {
        let o = OntologySchema::new(BTreeMap::new(), vec![], vec![]).unwrap();
        assert!(o.serialized_text().is_empty());
    }

    #[test]
    fn undeclared_domain_rejected() {
        let err = OntologySchema::new(
            BTreeMap::new(),
            vec![],
            vec![OntologyProperty {
                iri: "http://e/p".into(),
                label: "p".into(),
                domain: "http://e/C".into(),
                range: xsd::STRING.into(),
            }],
        )
        .unwrap_err();
        assert!(matches!(err, OntologyError::Domain { .. }));
    }

    #[test]
    fn alignment_reports_unknown_predicates_and_classes() {
        let o = OntologySchema::mini_ioe();
        let rules = vec![
            MappingRule {
                subject_template: "http://e/{id}".into(),
                predicate: format!("{IOE_NS}madeBySensor"),
                object: ObjectSource::IriTemplate {
                    iri_template: "http://e/s/{id}".into(),
                },
            },
            MappingRule {
                subject_template: "http://e/{id}".into(),
                predicate: format!("{IOE_NS}colour"),
                object: ObjectSource::Column {
                    column: "c".into(),
                    datatype: xsd::STRING.into(),
                },
            },
            MappingRule {
                subject_template: "http://e/{id}".into(),
                predicate: RDF_TYPE.into(),
                object: ObjectSource::Constant {
                    constant: format!("{IOE_NS}Robot"),
                    datatype: None,
                },
            },
        ];
        let issues = o.check_alignment(&rules);
        assert_eq!(issues.iter().map(|i| i.rule).collect::<Vec<_>>(), vec![1, 2]);
    }
}
