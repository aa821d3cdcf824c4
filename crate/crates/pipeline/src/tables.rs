//! CSV formats: survival metadata, feature tables and survival predictions.

use std::path::Path;

use glioma_core::features::{FeatureVector, FEATURE_NAMES};
use glioma_core::survival::SurvivalClass;
use glioma_core::{ResectionStatus, SurvivalRecord};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::fsutil;

/// Header names of the survival metadata columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurvivalColumns {
    pub case_id: String,
    pub age: String,
    pub survival_days: String,
    pub resection_status: String,
}

impl Default for SurvivalColumns {
    fn default() -> Self {
        SurvivalColumns {
            case_id: "BraTS19ID".into(),
            age: "Age".into(),
            survival_days: "Survival".into(),
            resection_status: "ResectionStatus".into(),
        }
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> PipelineError {
    PipelineError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> PipelineError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => PipelineError::io(path, io),
        kind => parse_error(path, line, format!("{kind:?}")),
    }
}

fn column(path: &Path, headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| parse_error(path, 1, format!("missing column `{name}`")))
}

/// One record per data row. An empty survival field is absent; a missing
/// resection field counts as NA. Line numbers in errors count the header as
/// line 1.
pub fn load_survival_table(path: &Path, columns: &SurvivalColumns) -> Result<Vec<SurvivalRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let id_col = column(path, &headers, &columns.case_id)?;
    let age_col = column(path, &headers, &columns.age)?;
    let days_col = column(path, &headers, &columns.survival_days)?;
    let status_col = headers.iter().position(|h| h.trim() == columns.resection_status);
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(i).map(str::trim);
        let id = field(id_col).filter(|s| !s.is_empty()).ok_or_else(|| parse_error(path, line, "missing case id"))?;
        let age_text = field(age_col).ok_or_else(|| parse_error(path, line, "missing age"))?;
        let age: f64 = age_text
            .parse()
            .map_err(|_| parse_error(path, line, format!("age `{age_text}` is not a number")))?;
        let days = match field(days_col).unwrap_or("") {
            "" => None,
            text => Some(
                text.parse::<f64>()
                    .map_err(|_| parse_error(path, line, format!("survival `{text}` is not a number")))?,
            ),
        };
        let status = status_col.and_then(field).map(ResectionStatus::parse).unwrap_or(ResectionStatus::NA);
        let record = SurvivalRecord::new(id, age, days, status).map_err(|e| parse_error(path, line, e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_survival_table(path: &Path, records: &[SurvivalRecord], columns: &SurvivalColumns) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let map = |e: csv::Error| PipelineError::format(path, e);
    w.write_record([&columns.case_id, &columns.age, &columns.survival_days, &columns.resection_status])
        .map_err(map)?;
    for r in records {
        let status = match r.resection {
            ResectionStatus::GTR => "GTR",
            ResectionStatus::STR => "STR",
            ResectionStatus::NA => "NA",
        };
        let days = r.survival_days.map(|d| d.to_string()).unwrap_or_default();
        w.write_record([r.case_id.as_str(), &r.age.to_string(), &days, status]).map_err(map)?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::format(path, e))?;
    fsutil::write_atomic(path, &bytes)
}

/// A feature table: named columns and one row per case.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<FeatureVector>,
}

impl FeatureTable {
    pub fn new(rows: Vec<FeatureVector>) -> Self {
        FeatureTable {
            names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            rows,
        }
    }

    pub fn find(&self, case_id: &str) -> Option<&FeatureVector> {
        self.rows.iter().find(|r| r.case_id == case_id)
    }
}

const CASE_COLUMN: &str = "case_id";
const EMPTY_CORE_COLUMN: &str = "empty_core";

/// Writes `case_id`, the feature columns, then `empty_core` (0 or 1). Values
/// use the shortest representation that parses back to the same float.
pub fn write_features(path: &Path, table: &FeatureTable) -> Result<()> {
    let map = |e: csv::Error| PipelineError::format(path, e);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![CASE_COLUMN.to_string()];
    header.extend(table.names.iter().cloned());
    header.push(EMPTY_CORE_COLUMN.into());
    w.write_record(&header).map_err(map)?;
    for r in &table.rows {
        let mut rec = vec![r.case_id.clone()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        rec.push((r.empty_core as u8).to_string());
        w.write_record(&rec).map_err(map)?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::format(path, e))?;
    fsutil::write_atomic(path, &bytes)
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.get(0) != Some(CASE_COLUMN) {
        return Err(parse_error(path, 1, format!("first column must be `{CASE_COLUMN}`")));
    }
    let has_flag = headers.iter().next_back() == Some(EMPTY_CORE_COLUMN);
    let end = headers.len() - has_flag as usize;
    let names: Vec<String> = headers.iter().skip(1).take(end - 1).map(String::from).collect();
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let mut values = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            let text = row.get(i + 1).unwrap_or("").trim();
            let v: f64 = text
                .parse()
                .map_err(|_| parse_error(path, line, format!("`{name}` value `{text}` is not a number")))?;
            values.push(v);
        }
        let empty_core = has_flag && row.get(end).map(str::trim) == Some("1");
        rows.push(FeatureVector {
            case_id: row[0].trim().to_string(),
            values,
            empty_core,
        });
    }
    Ok(FeatureTable { names, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub case_id: String,
    pub predicted_days: f64,
    pub predicted_class: SurvivalClass,
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in predictions {
        w.serialize(p).map_err(|e| PipelineError::format(path, e))?;
    }
    if predictions.is_empty() {
        w.write_record(["case_id", "predicted_days", "predicted_class"])
            .map_err(|e| PipelineError::format(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::format(path, e))?;
    fsutil::write_atomic(path, &bytes)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}
