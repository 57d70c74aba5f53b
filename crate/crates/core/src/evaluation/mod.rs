//! Confusion counts, metrics, report tables and the probability histogram.

pub mod histogram;
pub mod metrics;
pub mod report;

pub use histogram::{export_probability_histogram, probability_histogram, HistogramInput, HistogramRow};
pub use metrics::{confusion, metrics, ConfusionCounts, MetricSet};
pub use report::{build_reports, emit_reports, write_reports, ReportBundle, ReportInput, REPORT_FILES};
