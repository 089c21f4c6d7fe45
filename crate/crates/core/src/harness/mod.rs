//! Experiment orchestration: configs, the content-addressed cache, the
//! end-to-end pipeline, suites and report files.

mod cache;
mod config;
mod pipeline;
mod report;
mod suite;

pub use cache::{content_hash, images_hash, Cache};
pub use config::{DatasetSource, DeanonConfig, ExperimentConfig, SuiteConfig};
pub use pipeline::{
    anonymize_dataset, run_experiment, train_deanonymizer, ExperimentReport, FittedDeanonymizer, Pipeline,
    PreparedData, SeedRecord, StageRecord,
};
pub use report::{
    emit_failure, emit_report, read_outcomes_csv, read_report, write_outcomes_csv, FailureReport, OutcomeSummary,
    ReportFormat, FAILURE_FILE, REPORT_FILE,
};
pub use suite::{
    aggregate_rows, default_suite, desk_scale_methods, run_suite, AggregateRow, SuiteEntry, SuiteResult,
    AGGREGATE_FILE, AGGREGATE_HEADER, RECOGNIZER,
};
