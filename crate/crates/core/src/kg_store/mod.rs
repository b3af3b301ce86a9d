//! Knowledge-graph construction (clean → map → load) and query execution.

mod clean;
mod mapping;
mod ontology;
mod rows;

use serde::{Deserialize, Serialize};

pub use clean::{clean_rows, CellError, CellKind, CleanError, CleaningConfig, CleaningRule};
pub use mapping::{apply_mapping, load_mapping, parse_mapping, MappingError, MappingRule, ObjectSource};
pub use ontology::{AlignmentIssue, OntologyClass, OntologyError, OntologyProperty, OntologySchema, IOE_NS};
pub use rows::{RowSet, RowSetError};

use crate::rdf::Triple;
use crate::sparql::{QueryError, SparqlClient, SparqlResultSet, UpdateError};

/// Triples per `INSERT DATA` request.
pub const LOAD_BATCH: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadReport {
    pub inserted: usize,
    pub failed: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("endpoint unreachable: {message}")]
    Transport { message: String, report: LoadReport },
    #[error("endpoint rejected update with HTTP {status}: {body}")]
    Protocol {
        status: u16,
        body: String,
        report: LoadReport,
    },
}

impl LoadError {
    /// Counts at the point of failure.
    pub fn report(&self) -> LoadReport {
        match self {
            LoadError::Transport { report, .. } | LoadError::Protocol { report, .. } => *report,
        }
    }
}

/// Inserts triples with SPARQL 1.1 Update `INSERT DATA`. The store has set
/// semantics, so repeating a load leaves its contents unchanged.
pub async fn load_triples(triples: &[Triple], client: &SparqlClient) -> Result<LoadReport, LoadError> {
    let mut report = LoadReport::default();
    for batch in triples.chunks(LOAD_BATCH) {
        let mut update = String::from("INSERT DATA {\n");
        for t in batch {
            update.push_str(&t.to_ntriples());
            update.push('\n');
        }
        update.push('}');
        if let Err(err) = client.update(&update).await {
            report.failed = triples.len() - report.inserted;
            return Err(match err {
                UpdateError::Transport(message) => LoadError::Transport { message, report },
                UpdateError::Protocol { status, body } => LoadError::Protocol { status, body, report },
            });
        }
        report.inserted += batch.len();
    }
    Ok(report)
}

pub async fn execute_sparql(query: &str, client: &SparqlClient) -> Result<SparqlResultSet, QueryError> {
    client.query(query).await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtlSummary {
    pub rows: usize,
    pub triples: usize,
    pub load: LoadReport,
    /// Cells that kept their raw text because they did not parse.
    pub cell_errors: Vec<CellError>,
}

#[derive(Debug, thiserror::Error)]
pub enum EtlError {
    #[error(transparent)]
    Clean(#[from] CleanError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Load(#[from] LoadError),
}

/// Clean, map and load one table.
pub async fn run_etl(
    rows: &RowSet,
    mapping: &[MappingRule],
    cleaning: &CleaningConfig,
    client: &SparqlClient,
) -> Result<EtlSummary, EtlError> {
    let (cleaned, cell_errors) = clean_rows(rows, cleaning)?;
    let triples = apply_mapping(&cleaned, mapping)?;
    let load = load_triples(&triples, client).await?;
    tracing::info!(rows = rows.len(), triples = triples.len(), "etl load finished");
    Ok(EtlSummary {
        rows: rows.len(),
        triples: triples.len(),
        load,
        cell_errors,
    })
}

/// Number of triples in the default graph.
pub async fn count_triples(client: &SparqlClient) -> Result<u64, QueryError> {
    let rs = client.query("SELECT (COUNT(*) AS ?n) WHERE { ?s ?p ?o }").await?;
    rs.rows()
        .first()
        .and_then(|r| r.first())
        .and_then(|c| c.text().parse().ok())
        .ok_or_else(|| QueryError::new(crate::sparql::QueryErrorKind::Endpoint, "COUNT query returned no number"))
}

/// One table to load: CSV, mapping and optional cleaning config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EtlJob {
    pub csv: std::path::PathBuf,
    pub mapping: std::path::PathBuf,
    pub cleaning: Option<std::path::PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum EtlJobError {
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("{table}: {source}")]
    Etl {
        table: String,
        #[source]
        source: EtlError,
    },
}

/// Tables in `dir` by naming convention: `NAME.csv` with `NAME_mapping.json`
/// and, when present, `NAME_cleaning.json`. Sorted by file name.
pub fn discover_jobs(dir: impl AsRef<std::path::Path>) -> Result<Vec<EtlJob>, EtlJobError> {
    let dir = dir.as_ref();
    let input = |message: String| EtlJobError::Input {
        path: dir.display().to_string(),
        message,
    };
    let mut jobs = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| input(e.to_string()))? {
        let path = entry.map_err(|e| input(e.to_string()))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let mapping = dir.join(format!("{stem}_mapping.json"));
        if !mapping.is_file() {
            return Err(input(format!("{stem}.csv has no {stem}_mapping.json")));
        }
        let cleaning = dir.join(format!("{stem}_cleaning.json"));
        jobs.push(EtlJob {
            csv: path,
            mapping,
            cleaning: cleaning.is_file().then_some(cleaning),
        });
    }
    if jobs.is_empty() {
        return Err(input("no CSV tables found".into()));
    }
    jobs.sort_by(|a, b| a.csv.cmp(&b.csv));
    Ok(jobs)
}

impl EtlJob {
    pub async fn run(&self, client: &SparqlClient) -> Result<EtlSummary, EtlJobError> {
        let table = self.csv.display().to_string();
        let input = |path: &std::path::Path, message: String| EtlJobError::Input {
            path: path.display().to_string(),
            message,
        };
        let rows = RowSet::from_csv_path(&self.csv).map_err(|e| input(&self.csv, e.to_string()))?;
        let mapping = load_mapping(&self.mapping).map_err(|e| input(&self.mapping, e.to_string()))?;
        let cleaning = match &self.cleaning {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| input(path, e.to_string()))?;
                serde_json::from_str(&text).map_err(|e| input(path, e.to_string()))?
            }
            None => CleaningConfig::default(),
        };
        run_etl(&rows, &mapping, &cleaning, client)
            .await
            .map_err(|source| EtlJobError::Etl { table, source })
    }
}
