//! Report files: the full experiment report as JSON, per-protocol outcome
//! CSVs with JSON summaries, and failure reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cache::write_json;
use super::pipeline::ExperimentReport;
use crate::error::{Error, Result};
use crate::recognition::{summarize, Prediction, Protocol, RecognitionOutcome};

pub const REPORT_FILE: &str = "report.json";
pub const FAILURE_FILE: &str = "failure.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Per-protocol summary written next to the outcome CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub protocol: Protocol,
    pub mean: f64,
    pub ci: f64,
    pub per_identity: BTreeMap<String, f64>,
}

impl OutcomeSummary {
    pub fn new(protocol: Protocol, outcome: &RecognitionOutcome) -> Self {
        Self {
            protocol,
            mean: outcome.mean,
            ci: outcome.ci,
            per_identity: outcome.per_identity.clone(),
        }
    }
}

/// Why an experiment did not produce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub experiment: String,
    /// Pipeline stage that raised the error, when known.
    pub stage: Option<String>,
    pub cause: String,
}

impl FailureReport {
    pub fn from_error(experiment: impl Into<String>, err: &Error) -> Self {
        let cause = match err {
            Error::Stage { source, .. } => source.to_string(),
            e => e.to_string(),
        };
        Self {
            experiment: experiment.into(),
            stage: err.stage().map(str::to_string),
            cause,
        }
    }
}

fn outcome_stem(p: Protocol) -> String {
    format!("outcomes_{}", p.as_str())
}

/// Writes a report into `dir`. JSON writes the whole report; CSV writes one
/// `outcomes_<protocol>.csv` per protocol with its `.json` summary. Returns
/// the written paths.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match format {
        ReportFormat::Json => {
            let path = dir.join(REPORT_FILE);
            write_json(&path, report)?;
            Ok(vec![path])
        }
        ReportFormat::Csv => {
            let mut written = Vec::new();
            for (&protocol, outcome) in &report.outcomes {
                let csv_path = dir.join(format!("{}.csv", outcome_stem(protocol)));
                write_outcomes_csv(&outcome.predictions, &csv_path)?;
                let json_path = dir.join(format!("{}.json", outcome_stem(protocol)));
                write_json(&json_path, &OutcomeSummary::new(protocol, outcome))?;
                written.extend([csv_path, json_path]);
            }
            Ok(written)
        }
    }
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn emit_failure(failure: &FailureReport, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(FAILURE_FILE);
    write_json(&path, failure)?;
    Ok(path)
}

#[derive(Serialize, Deserialize)]
struct OutcomeRow {
    image_id: String,
    true_id: String,
    predicted_id: String,
}

pub fn write_outcomes_csv(predictions: &[Prediction], path: &Path) -> Result<()> {
    let mut wr = csv::Writer::from_path(path)?;
    for p in predictions {
        wr.serialize(OutcomeRow {
            image_id: p.image_id.clone(),
            true_id: p.true_id.clone(),
            predicted_id: p.predicted_id.clone(),
        })?;
    }
    wr.flush().map_err(|e| Error::io(path, e))
}

/// Reads an outcome CSV back and recomputes its statistics.
pub fn read_outcomes_csv(path: &Path) -> Result<RecognitionOutcome> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut predictions = Vec::new();
    for row in rd.deserialize() {
        let row: OutcomeRow = row?;
        predictions.push(Prediction {
            image_id: row.image_id,
            true_id: row.true_id,
            predicted_id: row.predicted_id,
        });
    }
    summarize(predictions)
}
