//! Edge adapter: turns provider CSV exports into EEML documents and pushes
//! them to a hub.
//!
//! Mapping file:
//!
//! ```json
//! { "feed_id": "abu-dhabi-weather",
//!   "timestamp_column": "TimeUTC",
//!   "timestamp_format": "ISO8601",
//!   "columns": [
//!     {"column":"TemperatureC","stream":"temperature","unit_label":"Celsius","unit_symbol":"C"} ] }
//! ```

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ClientError, HubClient};
use crate::eeml::{serialize_eeml, DataElement, EnvironmentDocument};
use crate::model::{is_decimal_lexical, parse_timestamp, FeedId, StreamId};

pub const TIMESTAMP_FORMAT_ISO8601: &str = "ISO8601";
pub const DEFAULT_INTERVAL_S: u64 = 3600;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("malformed mapping: {0}")]
    MalformedMapping(String),
    #[error("stream {0:?} is targeted by more than one column rule")]
    DuplicateStreamRule(String),
    #[error("unsupported timestamp format {0:?} (only ISO8601)")]
    UnsupportedTimestampFormat(String),
    #[error("CSV input has no header row")]
    MissingHeader,
    #[error("column {0:?} is not in the CSV header")]
    MissingColumn(String),
    #[error("CSV input is empty")]
    EmptyInput,
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("cannot read source {path}: {message}")]
    SourceUnreadable { path: PathBuf, message: String },
    #[error("hub unreachable: {0}")]
    HubUnreachable(String),
    #[error("hub rejected a document: {0}")]
    Remote(ClientError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRule {
    pub column: String,
    pub stream: StreamId,
    #[serde(default)]
    pub unit_label: Option<String>,
    #[serde(default)]
    pub unit_symbol: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterMapping {
    pub feed_id: FeedId,
    pub timestamp_column: String,
    pub timestamp_format: String,
    pub columns: Vec<ColumnRule>,
}

impl AdapterMapping {
    pub fn validate(&self) -> Result<(), AdapterError> {
        if self.timestamp_format != TIMESTAMP_FORMAT_ISO8601 {
            return Err(AdapterError::UnsupportedTimestampFormat(self.timestamp_format.clone()));
        }
        if self.timestamp_column.is_empty() {
            return Err(AdapterError::MalformedMapping("timestamp_column is empty".into()));
        }
        if self.columns.is_empty() {
            return Err(AdapterError::MalformedMapping("no column rules".into()));
        }
        let mut streams = HashSet::new();
        for rule in &self.columns {
            if rule.column.is_empty() {
                return Err(AdapterError::MalformedMapping("column rule with empty column name".into()));
            }
            if rule.column == self.timestamp_column {
                return Err(AdapterError::MalformedMapping(format!(
                    "timestamp column {:?} is also mapped as a value column",
                    rule.column
                )));
            }
            if rule.unit_label.as_deref() == Some("") {
                return Err(AdapterError::MalformedMapping(format!("empty unit_label for {}", rule.stream)));
            }
            if !streams.insert(rule.stream.as_str()) {
                return Err(AdapterError::DuplicateStreamRule(rule.stream.to_string()));
            }
        }
        Ok(())
    }
}

/// Parses and validates a JSON mapping document.
pub fn load_mapping(bytes: &[u8]) -> Result<AdapterMapping, AdapterError> {
    let mapping: AdapterMapping =
        serde_json::from_slice(bytes).map_err(|e| AdapterError::MalformedMapping(e.to_string()))?;
    mapping.validate()?;
    Ok(mapping)
}

/// A per-row problem that did not stop the conversion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowWarning {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Conversion {
    pub documents: Vec<EnvironmentDocument>,
    pub warnings: Vec<RowWarning>,
    /// Data rows consumed, including skipped ones.
    pub rows_read: usize,
}

/// One document per data row carrying at least one mapped value.
pub fn convert_csv(mapping: &AdapterMapping, csv: &[u8]) -> Result<Conversion, AdapterError> {
    convert_csv_from(mapping, csv, 0)
}

/// Like [`convert_csv`] but ignores the first `skip_rows` data rows.
pub fn convert_csv_from(mapping: &AdapterMapping, csv: &[u8], skip_rows: usize) -> Result<Conversion, AdapterError> {
    if csv.iter().all(u8::is_ascii_whitespace) {
        return Err(AdapterError::EmptyInput);
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(csv);
    let header = reader.headers().map_err(|e| AdapterError::Csv(e.to_string()))?.clone();
    if header.iter().all(str::is_empty) {
        return Err(AdapterError::MissingHeader);
    }
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AdapterError::MissingColumn(name.to_string()))
    };
    let ts_idx = position(&mapping.timestamp_column)?;
    let rules: Vec<(usize, &ColumnRule)> = mapping
        .columns
        .iter()
        .map(|r| position(&r.column).map(|i| (i, r)))
        .collect::<Result<_, _>>()?;

    let mut out = Conversion::default();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| AdapterError::Csv(e.to_string()))?;
        out.rows_read = row;
        if row <= skip_rows {
            continue;
        }
        let raw_ts = record.get(ts_idx).unwrap_or("");
        let Some(at) = parse_timestamp(raw_ts) else {
            out.warnings.push(RowWarning { row, message: format!("unparseable timestamp {raw_ts:?}, row skipped") });
            continue;
        };
        let mut elements = Vec::new();
        for (i, rule) in &rules {
            let cell = record.get(*i).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            if !is_decimal_lexical(cell) {
                out.warnings.push(RowWarning {
                    row,
                    message: format!("non-numeric {:?} in column {:?}, cell skipped", cell, rule.column),
                });
                continue;
            }
            elements.push(DataElement {
                id: rule.stream.clone(),
                tags: Vec::new(),
                current_value: cell.to_string(),
                at,
                unit_label: rule.unit_label.clone(),
                unit_symbol: rule.unit_symbol.clone(),
            });
        }
        if elements.is_empty() {
            out.warnings.push(RowWarning { row, message: "no mapped values, row skipped".into() });
            continue;
        }
        out.documents.push(EnvironmentDocument {
            environment_id: Some(mapping.feed_id.to_string()),
            updated: at,
            title: mapping.feed_id.to_string(),
            location: None,
            data_elements: elements,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub submitted: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub warnings: usize,
}

impl RunSummary {
    fn absorb(&mut self, other: RunSummary) {
        self.submitted += other.submitted;
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.warnings += other.warnings;
    }
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "submitted={} accepted={} rejected={} warnings={}",
            self.submitted, self.accepted, self.rejected, self.warnings
        )
    }
}

/// Polls a CSV file or directory and pushes new rows to the hub.
///
/// Directory mode submits `*.csv` files not seen before, in lexicographic
/// order. File mode submits rows appended since the previous cycle.
#[derive(Debug)]
pub struct Adapter {
    mapping: AdapterMapping,
    source: PathBuf,
    client: HubClient,
    processed_files: BTreeSet<PathBuf>,
    rows_done: usize,
}

impl Adapter {
    pub fn new(mapping: AdapterMapping, source: impl Into<PathBuf>, client: HubClient) -> Self {
        Adapter { mapping, source: source.into(), client, processed_files: BTreeSet::new(), rows_done: 0 }
    }

    fn unreadable(path: &Path, e: impl std::fmt::Display) -> AdapterError {
        AdapterError::SourceUnreadable { path: path.to_path_buf(), message: e.to_string() }
    }

    async fn submit(&self, conversion: &Conversion) -> Result<RunSummary, AdapterError> {
        let mut summary = RunSummary { warnings: conversion.warnings.len(), ..Default::default() };
        for warning in &conversion.warnings {
            tracing::warn!(row = warning.row, "{}", warning.message);
        }
        for doc in &conversion.documents {
            let bytes = serialize_eeml(doc).map_err(|e| AdapterError::Csv(e.to_string()))?;
            let report = self.client.ingest(&self.mapping.feed_id, bytes, true).await.map_err(|e| match e {
                ClientError::Unreachable { .. } => AdapterError::HubUnreachable(e.to_string()),
                other => AdapterError::Remote(other),
            })?;
            summary.submitted += 1;
            summary.accepted += report.accepted;
            summary.rejected += report.rejected.len();
        }
        Ok(summary)
    }

    fn read(path: &Path) -> Result<Vec<u8>, AdapterError> {
        std::fs::read(path).map_err(|e| Self::unreadable(path, e))
    }

    /// One polling cycle.
    pub async fn run_cycle(&mut self) -> Result<RunSummary, AdapterError> {
        let meta = std::fs::metadata(&self.source).map_err(|e| Self::unreadable(&self.source, e))?;
        let mut total = RunSummary::default();
        if meta.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&self.source)
                .map_err(|e| Self::unreadable(&self.source, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
                .filter(|p| !self.processed_files.contains(p))
                .collect();
            files.sort();
            for file in files {
                let bytes = Self::read(&file)?;
                let conversion = match convert_csv(&self.mapping, &bytes) {
                    Err(AdapterError::EmptyInput) => Conversion::default(),
                    other => other?,
                };
                total.absorb(self.submit(&conversion).await?);
                self.processed_files.insert(file);
            }
        } else {
            let bytes = Self::read(&self.source)?;
            let conversion = match convert_csv_from(&self.mapping, &bytes, self.rows_done) {
                Err(AdapterError::EmptyInput) => return Ok(total),
                other => other?,
            };
            total.absorb(self.submit(&conversion).await?);
            self.rows_done = conversion.rows_read.max(self.rows_done);
        }
        Ok(total)
    }

    /// Runs cycles every `interval` until `shutdown` resolves. Unreachable-hub
    /// and unreadable-source failures are logged and retried next cycle.
    pub async fn run_until(
        &mut self,
        interval: Duration,
        shutdown: impl std::future::Future<Output = ()>,
    ) -> Result<RunSummary, AdapterError> {
        tokio::pin!(shutdown);
        let mut total = RunSummary::default();
        loop {
            match self.run_cycle().await {
                Ok(s) => {
                    tracing::info!("cycle complete: {s}");
                    total.absorb(s);
                }
                Err(e @ (AdapterError::HubUnreachable(_) | AdapterError::SourceUnreadable { .. })) => {
                    tracing::warn!("cycle failed, retrying in {interval:?}: {e}");
                }
                Err(e) => return Err(e),
            }
            tokio::select! {
                _ = &mut shutdown => return Ok(total),
                _ = tokio::time::sleep(interval) => {}
            }
        }
    }
}
