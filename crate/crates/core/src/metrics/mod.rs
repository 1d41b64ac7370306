//! Accuracy, shared-parameter dispersion, drift norms and report files.

mod measures;
mod report;

pub use measures::{accuracy, delta_norms, distance, model_difference, DriftHistory};
pub use report::{emit_csv, emit_json, fmt_real, ExperimentReport, RoundMetrics};
