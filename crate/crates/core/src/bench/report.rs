//! Run tables and per-(scenario, planner) aggregates, written as CSV or JSON.
//!
//! CSV columns, in order: scenario, planner, seed, env_hash, success,
//! computation_time, iterations, execution_time, path_length,
//! min_clearance_observed, replan_count, failure_kind. Empty cells are
//! missing values. The aggregate table goes to `<stem>.summary.csv`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BenchError, RunRecord};
use crate::planner::PlannerKind;

pub const RECORD_COLUMNS: [&str; 12] = [
    "scenario",
    "planner",
    "seed",
    "env_hash",
    "success",
    "computation_time",
    "iterations",
    "execution_time",
    "path_length",
    "min_clearance_observed",
    "replan_count",
    "failure_kind",
];

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "scenario",
    "planner",
    "runs",
    "successes",
    "success_rate",
    "mean_computation_time",
    "median_computation_time",
    "mean_execution_time",
    "median_execution_time",
    "mean_path_length",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: String,
    pub planner: PlannerKind,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_computation_time: f64,
    pub median_computation_time: f64,
    /// Over successful runs.
    pub mean_execution_time: Option<f64>,
    pub median_execution_time: Option<f64>,
    /// Over runs that produced a path.
    pub mean_path_length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub records: Vec<RunRecord>,
    pub summary: Vec<Aggregate>,
}

impl Report {
    pub fn from_records(records: Vec<RunRecord>) -> Self {
        let summary = aggregate(&records);
        Self { records, summary }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// One row per (scenario, planner), in order of first appearance.
pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(String, PlannerKind)> = Vec::new();
    for r in records {
        let k = (r.scenario.clone(), r.planner);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(scenario, planner)| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| r.scenario == scenario && r.planner == planner).collect();
            let successes = rs.iter().filter(|r| r.success).count();
            let comp: Vec<f64> = rs.iter().map(|r| r.computation_time).collect();
            let exec: Vec<f64> = rs.iter().filter(|r| r.success).filter_map(|r| r.execution_time).collect();
            let len: Vec<f64> = rs.iter().filter_map(|r| r.path_length).collect();
            Aggregate {
                runs: rs.len(),
                successes,
                success_rate: successes as f64 / rs.len() as f64,
                mean_computation_time: mean(&comp).unwrap_or(0.0),
                median_computation_time: median(&comp).unwrap_or(0.0),
                mean_execution_time: mean(&exec),
                median_execution_time: median(&exec),
                mean_path_length: mean(&len),
                scenario,
                planner,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.summary.csv"))
}

fn io(e: impl std::fmt::Display) -> BenchError {
    BenchError::IoFailure(e.to_string())
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>, BenchError> {
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let got: Vec<String> = r.headers().map_err(io)?.iter().map(str::to_string).collect();
    if got != header {
        return Err(BenchError::IoFailure(format!("{}: unexpected columns {got:?}", path.display())));
    }
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(io)
}

/// Writes `report` in the format implied by the extension and returns the
/// files written.
pub fn write_report(report: &Report, path: &Path) -> Result<Vec<PathBuf>, BenchError> {
    match ReportFormat::from_path(path) {
        Some(ReportFormat::Csv) => {
            write_csv(path, &RECORD_COLUMNS, &report.records)?;
            let sp = summary_path(path);
            write_csv(&sp, &SUMMARY_COLUMNS, &report.summary)?;
            Ok(vec![path.to_path_buf(), sp])
        }
        Some(ReportFormat::Json) => {
            let text = serde_json::to_string_pretty(report).map_err(io)?;
            std::fs::write(path, text).map_err(io)?;
            Ok(vec![path.to_path_buf()])
        }
        None => Err(BenchError::IoFailure(format!("{}: extension must be .csv or .json", path.display()))),
    }
}

/// Parses a report written by [`write_report`]. A CSV report without its
/// summary file gets the summary recomputed.
pub fn read_report(path: &Path) -> Result<Report, BenchError> {
    match ReportFormat::from_path(path) {
        Some(ReportFormat::Csv) => {
            let records: Vec<RunRecord> = read_csv(path, &RECORD_COLUMNS)?;
            let sp = summary_path(path);
            let summary = if sp.exists() { read_csv(&sp, &SUMMARY_COLUMNS)? } else { aggregate(&records) };
            Ok(Report { records, summary })
        }
        Some(ReportFormat::Json) => {
            let text = std::fs::read_to_string(path).map_err(io)?;
            serde_json::from_str(&text).map_err(io)
        }
        None => Err(BenchError::IoFailure(format!("{}: extension must be .csv or .json", path.display()))),
    }
}
