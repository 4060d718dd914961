//! Metrics, the ablation matrix, the shuffle benchmark and report output.

pub mod benchmark;
pub mod metrics;
pub mod pipeline;
pub mod report;

pub use benchmark::{
    run_ablation, run_shuffled_benchmark, test_split_size, BenchmarkResult, ConfigSummary, RunRecord,
    REFERENCE_TEST_SIZE, REFERENCE_TRAIN_SIZE,
};
pub use metrics::{confusion, metrics_from_confusion, ConfusionMatrix, MetricsRecord};
pub use pipeline::{
    ablation_matrix, fit_classifier, run_configs, standard_configs, AblationConfig, AugmenterHistories, AugmenterSet,
    ClassifierKind, PipelineSettings, RunContext, Split,
};
pub use report::{emit_report, render_csv, render_markdown, render_report, ReportFormat, CSV_HEADER};
