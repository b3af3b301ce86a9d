use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum RowSetError {
    #[error("row {row} has {got} cells, expected {expected}")]
    Width {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("duplicate column '{0}'")]
    DuplicateColumn(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Tabular raw data: named columns and string cells, one per column per row.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RowSet {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl RowSet {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self, RowSetError> {
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].contains(c) {
                return Err(RowSetError::DuplicateColumn(c.clone()));
            }
        }
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != columns.len()) {
            return Err(RowSetError::Width {
                row,
                got: r.len(),
                expected: columns.len(),
            });
        }
        Ok(Self { columns, rows })
    }

    /// Reads CSV with a header row (UTF-8, `,` separator, `"` quoting).
    pub fn from_csv_reader(reader: impl Read) -> Result<Self, RowSetError> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let columns: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in csv.records() {
            rows.push(record?.iter().map(str::to_string).collect());
        }
        Self::new(columns, rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, RowSetError> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub(crate) fn rows_mut(&mut self) -> &mut [Vec<String>] {
        &mut self.rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_quoted_csv() {
        let data = "id,name\ns1,\"Line, A\"\ns2,B\n";
        let rs = RowSet::from_csv_reader(data.as_bytes()).unwrap();
        assert_eq!(rs.columns(), ["id", "name"]);
        assert_eq!(rs.rows()[0], ["s1", "Line, A"]);
    }

    #[test]
    fn ragged_row_is_rejected() {
        let data = "a,b\n1,2\n3\n";
        assert!(matches!(
            RowSet::from_csv_reader(data.as_bytes()),
            Err(RowSetError::Width { row: 1, got: 1, expected: 2 })
        ));
    }
}
