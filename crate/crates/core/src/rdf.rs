//! RDF terms and triples.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod xsd {
    pub const NS: &str = "http://www.w3.org/2001/XMLSchema#";
    pub const STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
    pub const INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
    pub const DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";
    pub const DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";
    pub const FLOAT: &str = "http://www.w3.org/2001/XMLSchema#float";
    pub const BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";
    pub const DATE: &str = "http://www.w3.org/2001/XMLSchema#date";
    pub const DATE_TIME: &str = "http://www.w3.org/2001/XMLSchema#dateTime";

    const NUMERIC_LOCAL: &[&str] = &[
        "integer",
        "decimal",
        "double",
        "float",
        "int",
        "long",
        "short",
        "byte",
        "nonNegativeInteger",
        "nonPositiveInteger",
        "positiveInteger",
        "negativeInteger",
        "unsignedInt",
        "unsignedLong",
        "unsignedShort",
        "unsignedByte",
    ];

    pub fn is_numeric(datatype: &str) -> bool {
        datatype
            .strip_prefix(NS)
            .is_some_and(|local| NUMERIC_LOCAL.contains(&local))
    }

    pub fn is_temporal(datatype: &str) -> bool {
        datatype == DATE || datatype == DATE_TIME
    }
}

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const RDF_LANG_STRING: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString";

/// True for an absolute IRI: a scheme (`ALPHA *( ALPHA / DIGIT / "+" / "-" / "." )`)
/// followed by `:` and a non-empty remainder without whitespace or the
/// characters N-Triples forbids inside `<...>`.
pub fn is_absolute_iri(s: &str) -> bool {
    let Some((scheme, rest)) = s.split_once(':') else {
        return false;
    };
    let mut chars = scheme.chars();
    let scheme_ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    scheme_ok
        && !rest.is_empty()
        && !s
            .chars()
            .any(|c| c.is_whitespace() || c.is_control() || "<>\"{}|^`\\".contains(c))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Term {
    Iri { value: String },
    Literal { lexical: String, datatype: String },
}

impl Term {
    pub fn iri(value: impl Into<String>) -> Self {
        Term::Iri {
            value: value.into(),
        }
    }

    pub fn literal(lexical: impl Into<String>, datatype: impl Into<String>) -> Self {
        Term::Literal {
            lexical: lexical.into(),
            datatype: datatype.into(),
        }
    }

    fn write_nt(&self, out: &mut String) {
        match self {
            Term::Iri { value } => {
                out.push('<');
                out.push_str(value);
                out.push('>');
            }
            Term::Literal { lexical, datatype } => {
                out.push('"');
                escape_literal(lexical, out);
                out.push_str("\"^^<");
                out.push_str(datatype);
                out.push('>');
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_nt(&mut s);
        f.write_str(&s)
    }
}

fn escape_literal(lexical: &str, out: &mut String) {
    for c in lexical.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TripleError {
    #[error("subject '{0}' is not an absolute IRI")]
    Subject(String),
    #[error("predicate '{0}' is not an absolute IRI")]
    Predicate(String),
    #[error("object IRI '{0}' is not an absolute IRI")]
    ObjectIri(String),
    #[error("literal datatype '{0}' is not an absolute IRI")]
    Datatype(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: Term,
}

impl Triple {
    /// Builds a triple, checking that every IRI position holds an absolute IRI.
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: Term,
    ) -> Result<Self, TripleError> {
        let subject = subject.into();
        let predicate = predicate.into();
        if !is_absolute_iri(&subject) {
            return Err(TripleError::Subject(subject));
        }
        if !is_absolute_iri(&predicate) {
            return Err(TripleError::Predicate(predicate));
        }
        match &object {
            Term::Iri { value } if !is_absolute_iri(value) => {
                return Err(TripleError::ObjectIri(value.clone()))
            }
            Term::Literal { datatype, .. } if !is_absolute_iri(datatype) => {
                return Err(TripleError::Datatype(datatype.clone()))
            }
            _ => {}
        }
        Ok(Self {
            subject,
            predicate,
            object,
        })
    }

    /// N-Triples line without the trailing newline.
    pub fn to_ntriples(&self) -> String {
        let mut s = String::with_capacity(64);
        s.push('<');
        s.push_str(&self.subject);
        s.push_str("> <");
        s.push_str(&self.predicate);
        s.push_str("> ");
        self.object.write_nt(&mut s);
        s.push_str(" .");
        s
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_ntriples())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_iri_check() {
        assert!(is_absolute_iri("http://example.org/a"));
        assert!(is_absolute_iri("urn:x"));
        assert!(!is_absolute_iri("sensor/1"));
        assert!(!is_absolute_iri("http://example.org/a b"));
        assert!(!is_absolute_iri("1http://x"));
        assert!(!is_absolute_iri(""));
    }

    #[test]
    fn triple_rejects_relative_subject() {
        let err = Triple::new("s1", "http://e/p", Term::iri("http://e/o")).unwrap_err();
        assert_eq!(err, TripleError::Subject("s1".into()));
    }

    #[test]
    fn ntriples_escapes_literal() {
        let t = Triple::new(
            "http://e/s",
            "http://e/p",
            Term::literal("say \"hi\"\n", xsd::STRING),
        )
        .unwrap();
        assert_eq!(
            t.to_ntriples(),
            r#"<http://e/s> <http://e/p> "say \"hi\"\n"^^<http://www.w3.org/2001/XMLSchema#string> ."#
        );
    }

    #[test]
    fn numeric_datatypes() {
        assert!(xsd::is_numeric(xsd::DOUBLE));
        assert!(xsd::is_numeric(xsd::INTEGER));
        assert!(!xsd::is_numeric(xsd::STRING));
        assert!(!xsd::is_numeric("http://example.org/integer"));
    }
}
