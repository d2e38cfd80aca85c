//! Manifest-driven batch evaluation and site-wise reporting.

use std::path::PathBuf;

use thiserror::Error;

mod evaluate;
mod manifest;
mod report;

pub use evaluate::{evaluate_all, evaluate_record, EvalConfig, EvaluationRow, RowStatus};
pub use manifest::{load_manifest, TripletRecord, REQUIRED_COLUMNS};
pub use report::{
    emit_report, format_cell, metric_series, parse_json_report, read_results_csv, summarize,
    write_results_csv, GroupBy, Metric, MetricSummary, ReportFormat, ReportMeta, SummaryTable,
    RESULT_COLUMNS,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("required column {0:?} is missing")]
    MissingColumn(String),
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("cannot read {0}: {1}")]
    UnreadableFile(PathBuf, String),
    #[error("record {record}: {reason}")]
    InvalidRecord { record: usize, reason: String },
    #[error("every record failed ({} rows)", .0.len())]
    AllRecordsFailed(Vec<EvaluationRow>),
    #[error("no successful rows to summarize")]
    NoSuccessfulRows,
    #[error("unsupported report format {0:?} (expected csv, json or md)")]
    UnsupportedFormat(String),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("unknown group key {0:?} (expected direction, site-out, site-in or all)")]
    UnknownGroupKey(String),
    #[error("invalid results file: {0}")]
    InvalidResults(String),
    #[error("cannot start worker pool: {0}")]
    Workers(String),
    #[error("report output: {0}")]
    Output(String),
}
