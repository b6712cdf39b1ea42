//! CSV and JSON output of experiment results.
//!
//! CSV schema: header `estimator,t,metric,value,rep_count`, one row per
//! aggregate, LF line endings, floats in shortest round-trip form. Run
//! metadata goes only to JSON.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentResult, ResultRow};
use crate::error::{BooError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = BooError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(BooError::Config(format!("unknown output format `{other}` (csv or json)"))),
        }
    }
}

pub const CSV_HEADER: [&str; 5] = ["estimator", "t", "metric", "value", "rep_count"];

pub fn write_csv_to<W: Write>(w: W, rows: &[ResultRow]) -> std::result::Result<(), csv::Error> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    writer.write_record(CSV_HEADER)?;
    for row in rows {
        writer.write_record([
            row.estimator.as_str(),
            &row.t.to_string(),
            row.metric.as_str(),
            &row.value.to_string(),
            &row.rep_count.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv_to(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

pub fn parse_csv(text: &str, origin: &Path) -> Result<Vec<ResultRow>> {
    let bad = |message: String| BooError::Format { path: origin.to_path_buf(), message };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    reader.deserialize().map(|r| r.map_err(|e| bad(e.to_string()))).collect()
}

pub fn to_json_string(result: &ExperimentResult) -> String {
    let mut s = serde_json::to_string_pretty(result).expect("result is JSON-representable");
    s.push('\n');
    s
}

pub fn parse_json(text: &str, origin: &Path) -> Result<ExperimentResult> {
    serde_json::from_str(text).map_err(|e| BooError::Format { path: origin.to_path_buf(), message: e.to_string() })
}

/// Writes `result` to `path` in `format`.
pub fn emit(result: &ExperimentResult, format: OutputFormat, path: &Path) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => to_csv_string(&result.rows),
        OutputFormat::Json => to_json_string(result),
    };
    std::fs::write(path, text).map_err(|e| BooError::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| BooError::io(path, e))?;
    parse_csv(&text, path)
}

pub fn read_json(path: &Path) -> Result<ExperimentResult> {
    let text = std::fs::read_to_string(path).map_err(|e| BooError::io(path, e))?;
    parse_json(&text, path)
}
