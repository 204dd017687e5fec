//! Synthetic benchmark cases and evaluation metrics.

pub mod cases;
pub mod generators;
pub mod metrics;

pub use cases::{run_case, BenchMethod, CaseId, CaseOptions, CaseReport, MetricReport, MetricSpec, CSV_HEADER};
