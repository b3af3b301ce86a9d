//! SPARQL 1.1 query results (JSON format).

use std::collections::{BTreeMap, HashSet};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::rdf::{xsd, RDF_LANG_STRING};

/// One cell of a binding row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    Unbound,
    Iri(String),
    Literal { lexical: String, datatype: String },
    Blank(String),
}

impl Cell {
    pub fn literal(lexical: impl Into<String>, datatype: impl Into<String>) -> Self {
        Cell::Literal {
            lexical: lexical.into(),
            datatype: datatype.into(),
        }
    }

    pub fn is_bound(&self) -> bool {
        !matches!(self, Cell::Unbound)
    }

    /// Lexical form (IRI text, literal lexical, blank label); empty when unbound.
    pub fn text(&self) -> &str {
        match self {
            Cell::Unbound => "",
            Cell::Iri(v) | Cell::Blank(v) => v,
            Cell::Literal { lexical, .. } => lexical,
        }
    }

    pub fn datatype(&self) -> Option<&str> {
        match self {
            Cell::Literal { datatype, .. } => Some(datatype),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResultSetError {
    #[error("duplicate variable '{0}'")]
    DuplicateVariable(String),
    #[error("row {row} has {got} cells, expected {expected}")]
    RowWidth {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("malformed results document: {0}")]
    Malformed(String),
}

/// Variables plus binding rows. Each row holds exactly one cell per variable,
/// in variable order.
///
/// ASK results are represented as a single `boolean` variable with one
/// `xsd:boolean` row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparqlResultSet {
    variables: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl SparqlResultSet {
    pub fn new(variables: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self, ResultSetError> {
        let mut seen = HashSet::new();
        for v in &variables {
            if !seen.insert(v.as_str()) {
                return Err(ResultSetError::DuplicateVariable(v.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != variables.len() {
                return Err(ResultSetError::RowWidth {
                    row: i,
                    got: row.len(),
                    expected: variables.len(),
                });
            }
        }
        Ok(Self { variables, rows })
    }

    pub fn empty(variables: Vec<String>) -> Result<Self, ResultSetError> {
        Self::new(variables, Vec::new())
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    /// Cells of one column, top to bottom.
    pub fn column(&self, index: usize) -> impl Iterator<Item = &Cell> {
        self.rows.iter().map(move |r| &r[index])
    }

    pub fn from_json_str(s: &str) -> Result<Self, ResultSetError> {
        serde_json::from_str(s).map_err(|e| ResultSetError::Malformed(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("result set serialization is infallible")
    }
}

#[derive(Serialize, Deserialize)]
struct JsonHead {
    #[serde(default)]
    vars: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct JsonResults {
    bindings: Vec<BTreeMap<String, JsonTerm>>,
}

#[derive(Serialize, Deserialize)]
struct JsonDocument {
    head: JsonHead,
    #[serde(skip_serializing_if = "Option::is_none")]
    results: Option<JsonResults>,
    #[serde(skip_serializing_if = "Option::is_none")]
    boolean: Option<bool>,
}

#[derive(Serialize, Deserialize)]
struct JsonTerm {
    #[serde(rename = "type")]
    kind: String,
    value: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    datatype: Option<String>,
    #[serde(rename = "xml:lang", skip_serializing_if = "Option::is_none")]
    lang: Option<String>,
}

impl JsonTerm {
    fn into_cell(self) -> Result<Cell, String> {
        match self.kind.as_str() {
            "uri" => Ok(Cell::Iri(self.value)),
            "bnode" => Ok(Cell::Blank(self.value)),
            "literal" | "typed-literal" => {
                let datatype = match (self.datatype, self.lang) {
                    (Some(dt), _) => dt,
                    (None, Some(_)) => RDF_LANG_STRING.to_string(),
                    (None, None) => xsd::STRING.to_string(),
                };
                Ok(Cell::Literal {
                    lexical: self.value,
                    datatype,
                })
            }
            other => Err(format!("unknown term type '{other}'")),
        }
    }

    fn from_cell(cell: &Cell) -> Option<Self> {
        let (kind, value, datatype) = match cell {
            Cell::Unbound => return None,
            Cell::Iri(v) => ("uri", v.clone(), None),
            Cell::Blank(v) => ("bnode", v.clone(), None),
            Cell::Literal { lexical, datatype } => {
                ("literal", lexical.clone(), Some(datatype.clone()))
            }
        };
        Some(JsonTerm {
            kind: kind.to_string(),
            value,
            datatype,
            lang: None,
        })
    }
}

impl Serialize for SparqlResultSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let bindings = self
            .rows
            .iter()
            .map(|row| {
                self.variables
                    .iter()
                    .zip(row)
                    .filter_map(|(var, cell)| JsonTerm::from_cell(cell).map(|t| (var.clone(), t)))
                    .collect()
            })
            .collect();
        JsonDocument {
            head: JsonHead {
                vars: self.variables.clone(),
            },
            results: Some(JsonResults { bindings }),
            boolean: None,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SparqlResultSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = JsonDocument::deserialize(deserializer)?;
        if let Some(b) = doc.boolean {
            return Ok(SparqlResultSet {
                variables: vec!["boolean".into()],
                rows: vec![vec![Cell::literal(b.to_string(), xsd::BOOLEAN)]],
            });
        }
        let results = doc
            .results
            .ok_or_else(|| D::Error::custom("results document has neither results nor boolean"))?;
        let variables = doc.head.vars;
        let mut rows = Vec::with_capacity(results.bindings.len());
        for mut binding in results.bindings {
            let mut row = Vec::with_capacity(variables.len());
            for var in &variables {
                row.push(match binding.remove(var) {
                    Some(term) => term.into_cell().map_err(D::Error::custom)?,
                    None => Cell::Unbound,
                });
            }
            if let Some(extra) = binding.keys().next() {
                return Err(D::Error::custom(format!(
                    "binding for undeclared variable '{extra}'"
                )));
            }
            rows.push(row);
        }
        SparqlResultSet::new(variables, rows).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_standard_document() {
        let doc = r#"{"head":{"vars":["s","v"]},"results":{"bindings":[
            {"s":{"type":"uri","value":"http://e/a"},"v":{"type":"literal","value":"20.5","datatype":"http://www.w3.org/2001/XMLSchema#double"}},
            {"s":{"type":"bnode","value":"b0"}}
        ]}}"#;
        let rs = SparqlResultSet::from_json_str(doc).unwrap();
        assert_eq!(rs.variables(), ["s", "v"]);
        assert_eq!(rs.rows()[0][1], Cell::literal("20.5", xsd::DOUBLE));
        assert_eq!(rs.rows()[1][1], Cell::Unbound);
        assert_eq!(rs.rows()[1][0], Cell::Blank("b0".into()));
    }

    #[test]
    fn variable_order_is_preserved() {
        let doc = r#"{"head":{"vars":["z","a","m"]},"results":{"bindings":[]}}"#;
        let rs = SparqlResultSet::from_json_str(doc).unwrap();
        assert_eq!(rs.variables(), ["z", "a", "m"]);
    }

    #[test]
    fn plain_and_language_literals() {
        let doc = r#"{"head":{"vars":["x","y"]},"results":{"bindings":[
            {"x":{"type":"literal","value":"a"},"y":{"type":"literal","value":"b","xml:lang":"en"}}]}}"#;
        let rs = SparqlResultSet::from_json_str(doc).unwrap();
        assert_eq!(rs.rows()[0][0].datatype(), Some(xsd::STRING));
        assert_eq!(rs.rows()[0][1].datatype(), Some(RDF_LANG_STRING));
    }

    #[test]
    fn ask_document() {
        let rs = SparqlResultSet::from_json_str(r#"{"head":{},"boolean":true}"#).unwrap();
        assert_eq!(rs.variables(), ["boolean"]);
        assert_eq!(rs.rows()[0][0].text(), "true");
    }

    #[test]
    fn rejects_duplicate_variables_and_stray_bindings() {
        assert!(SparqlResultSet::from_json_str(
            r#"{"head":{"vars":["a","a"]},"results":{"bindings":[]}}"#
        )
        .is_err());
        assert!(SparqlResultSet::from_json_str(
            r#"{"head":{"vars":["a"]},"results":{"bindings":[{"b":{"type":"uri","value":"u:x"}}]}}"#
        )
        .is_err());
    }

    #[test]
    fn json_round_trip() {
        let rs = SparqlResultSet::new(
            vec!["a".into(), "b".into()],
            vec![
                vec![Cell::Iri("http://e/x".into()), Cell::literal("1", xsd::INTEGER)],
                vec![Cell::Unbound, Cell::literal("t", xsd::STRING)],
            ],
        )
        .unwrap();
        let back = SparqlResultSet::from_json_str(&rs.to_json_string()).unwrap();
        assert_eq!(back, rs);
    }
}
