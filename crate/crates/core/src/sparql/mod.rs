//! SPARQL protocol client, results model and local query validation.

mod client;
mod lexer;
mod results;
mod validate;

pub use client::{
    QueryError, QueryErrorKind, SparqlClient, SparqlExecutor, UpdateError, DEFAULT_TIMEOUT,
    SPARQL_QUERY, SPARQL_RESULTS_JSON, SPARQL_UPDATE,
};
pub use results::{Cell, ResultSetError, SparqlResultSet};
pub use validate::{validate_sparql, SyntaxIssue};
