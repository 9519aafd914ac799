//! The augmentation-ratio sweep: count planning, the real/generated split
//! discipline, metrics and report rendering.

mod dataset;
mod metrics;
mod plan;
mod report;
mod sweep;

pub use dataset::{reference_test_counts, split_dataset, SplitDataset, Subject};
pub use metrics::{compute_metrics, format_fraction, format_percent, mean_metrics, ConfusionMatrix, Metrics, UNDEFINED};
pub use plan::{
    plan_augmentation, ratio_label, AugmentationPlan, ClassPlan, Counts, REFERENCE_TEST, REFERENCE_TOTALS,
    REFERENCE_TRAIN,
};
pub use report::{log_line, parse_log, render_report, ReportFormat};
pub use sweep::{run_sweep, run_sweep_with, ExperimentReport, FoldResult, Prediction, SampleRef, SweepConfig, SweepRow};
