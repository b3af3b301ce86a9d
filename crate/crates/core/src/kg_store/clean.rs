//! Standardizes raw cells before mapping: ISO-8601 temporals, plain decimal
//! numbers, trimmed strings.

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::rows::RowSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellKind {
    Date {
        #[serde(default)]
        day_first: bool,
    },
    DateTime {
        #[serde(default)]
        day_first: bool,
    },
    Numeric {
        /// Input uses `,` as decimal separator and `.` for grouping.
        #[serde(default)]
        decimal_comma: bool,
    },
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningRule {
    pub column: String,
    #[serde(flatten)]
    pub kind: CellKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CleaningConfig {
    #[serde(default)]
    pub rules: Vec<CleaningRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellError {
    pub row: usize,
    pub column: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CleanError {
    #[error("cleaning rule references unknown column '{0}'")]
    UnknownColumn(String),
}

/// Trims every cell and normalizes typed columns. Cells that fail to parse
/// keep their trimmed text and are listed in the returned report.
pub fn clean_rows(
    rows: &RowSet,
    config: &CleaningConfig,
) -> Result<(RowSet, Vec<CellError>), CleanError> {
    let mut typed = Vec::with_capacity(config.rules.len());
    for rule in &config.rules {
        let idx = rows
            .column_index(&rule.column)
            .ok_or_else(|| CleanError::UnknownColumn(rule.column.clone()))?;
        typed.push((idx, rule));
    }

    let mut out = rows.clone();
    let mut report = Vec::new();
    for (r, row) in out.rows_mut().iter_mut().enumerate() {
        for cell in row.iter_mut() {
            let trimmed = cell.trim();
            if trimmed.len() != cell.len() {
                *cell = trimmed.to_string();
            }
        }
        for (idx, rule) in &typed {
            let cell = &mut row[*idx];
            if cell.is_empty() {
                continue;
            }
            match normalize(cell, rule.kind) {
                Ok(v) => *cell = v,
                Err(reason) => report.push(CellError {
                    row: r,
                    column: rule.column.clone(),
                    reason,
                }),
            }
        }
    }
    Ok((out, report))
}

fn normalize(cell: &str, kind: CellKind) -> Result<String, String> {
    match kind {
        CellKind::Text => Ok(cell.to_string()),
        CellKind::Numeric { decimal_comma } => normalize_number(cell, decimal_comma),
        CellKind::Date { day_first } => parse_date(cell, day_first)
            .map(|d| d.format("%Y-%m-%d").to_string())
            .ok_or_else(|| format!("'{cell}' is not a recognised date")),
        CellKind::DateTime { day_first } => parse_datetime(cell, day_first)
            .ok_or_else(|| format!("'{cell}' is not a recognised date-time")),
    }
}

fn normalize_number(cell: &str, decimal_comma: bool) -> Result<String, String> {
    let compact: String = cell.chars().filter(|c| !c.is_whitespace() && *c != '\'').collect();
    let plain = if decimal_comma {
        compact.replace('.', "").replace(',', ".")
    } else {
        compact.replace(',', "")
    };
    if is_plain_number(&plain) {
        Ok(plain)
    } else {
        Err(format!("'{cell}' is not a number"))
    }
}

fn is_plain_number(s: &str) -> bool {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let (int, frac) = match mantissa.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (mantissa, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = match frac {
        Some(f) => (int.is_empty() || digits(int)) && digits(f),
        None => digits(int),
    };
    let exponent_ok = exponent.is_none_or(|e| digits(e.strip_prefix(['+', '-']).unwrap_or(e)));
    mantissa_ok && exponent_ok
}

fn date_formats(day_first: bool) -> &'static [&'static str] {
    if day_first {
        &["%Y-%m-%d", "%d/%m/%Y", "%d-%m-%Y", "%d.%m.%Y", "%Y/%m/%d"]
    } else {
        &["%Y-%m-%d", "%m/%d/%Y", "%m-%d-%Y", "%m.%d.%Y", "%Y/%m/%d"]
    }
}

fn parse_date(cell: &str, day_first: bool) -> Option<NaiveDate> {
    date_formats(day_first)
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(cell, f).ok())
}

fn parse_datetime(cell: &str, day_first: bool) -> Option<String> {
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(cell) {
        return Some(dt.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true));
    }
    for date_fmt in date_formats(day_first) {
        for sep in ["T", " "] {
            for time_fmt in ["%H:%M:%S", "%H:%M"] {
                let fmt = format!("{date_fmt}{sep}{time_fmt}");
                if let Ok(dt) = NaiveDateTime::parse_from_str(cell, &fmt) {
                    return Some(dt.format("%Y-%m-%dT%H:%M:%S").to_string());
                }
            }
        }
    }
    parse_date(cell, day_first).map(|d| format!("{}T00:00:00", d.format("%Y-%m-%d")))
}
