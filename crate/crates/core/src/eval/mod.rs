//! Geometric random walk baseline and ensemble forecast scores.

mod grw;
mod metrics;
mod report;

pub use grw::{fit_grw, fit_grw_series, simulate_grw, GrwParams};
pub use metrics::{
    crps_ensemble, ensemble_mean, evaluate_ensemble, interval_score, mae, mis, quantile_sorted, rmse, MetricAccumulator, MetricMode, Metrics,
    DEFAULT_ALPHA,
};
pub use report::{lookup, read_report, report_rows, write_report, ReportRow};
