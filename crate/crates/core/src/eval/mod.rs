//! Measurement suite over predictions and capture records.

pub mod metrics;
pub mod report;

pub use metrics::{
    accuracy_curve, aggregate_splits, build_visit_record, distinct_coverage, percent, split_topk_accuracy,
    topk_hit, ArtworkVisit, Prediction, VisitRecord,
};
pub use report::{read_report, write_report, EvalReport, ReportFiles, SplitCurve, SplitPredictions};
