//! Rolling walk-forward evaluation: refits, the daily service loop, metrics and ablations.

mod ablation;
mod engine;
mod metrics;
mod output;
mod schedule;

pub use ablation::{
    component_table, orderings, quality_table, run_ablations, run_ablations_from_clean, run_corrupted, summarize,
    AblationRuns, AblationSummary, ComponentRow, OrderingCheck, QualityAblationRow,
};
pub use engine::{
    run_backtest, run_backtest_with_reference, stress_mask, stress_threshold, BacktestRecord, BacktestRun,
    Evaluation, Forecast, SegmentSummary,
};
pub use metrics::{
    alert_counts, evaluate, kupiec_lr, record_slices, rolling_breach, slice_names, AlertCounts, Method, MetricsRow,
    MetricsTable, RollingPoint,
};
pub use output::{
    config_echo, metrics_report, overall_alerts, read_json, render_ablation, render_metrics, write_ablation_artifacts,
    write_alerts_csv, write_backtest_artifacts, write_json, write_records_csv, write_rolling_csv, MetricsReport,
    ABLATION_FILE, ALERTS_FILE, COMPONENT_TABLE_FILE, FAULT_LOG_FILE, METRICS_FILE, QUALITY_TABLE_FILE,
    RECORDS_FILE, RECORD_COLUMNS, ROLLING_FILE,
};
pub use schedule::{build_schedule, Schedule, Segment};
