use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Everything measured in one communication round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// 1-based round index.
    pub round: usize,
    pub participants: Vec<usize>,
    /// Test accuracy of every client, indexed by client id.
    pub client_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub model_difference: f64,
    pub delta_sigma: f64,
    pub delta_tau: f64,
    /// Bytes uploaded by all participants this round (8 per shared value).
    pub uploaded_bytes: u64,
    /// Values trained per client in each local phase, keyed by phase name.
    pub trained_params: BTreeMap<String, usize>,
    /// Wall-clock seconds; zero unless timing was requested.
    pub secs: f64,
}

impl RoundMetrics {
    pub fn mean_of(accuracies: &[f64]) -> f64 {
        if accuracies.is_empty() {
            return 0.0;
        }
        accuracies.iter().sum::<f64>() / accuracies.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: serde_json::Value,
    pub config_digest: String,
    pub clients: usize,
    pub rounds: Vec<RoundMetrics>,
    /// `None` until a round has been recorded.
    pub best_mean_accuracy: Option<f64>,
    pub best_round: Option<usize>,
}

impl ExperimentReport {
    pub fn new(config: serde_json::Value, config_digest: String, clients: usize) -> Self {
        ExperimentReport {
            config,
            config_digest,
            clients,
            rounds: Vec::new(),
            best_mean_accuracy: None,
            best_round: None,
        }
    }

    /// Appends a round and updates the running best (earliest round wins ties).
    pub fn push(&mut self, metrics: RoundMetrics) {
        if self.best_mean_accuracy.is_none_or(|b| metrics.mean_accuracy > b) {
            self.best_mean_accuracy = Some(metrics.mean_accuracy);
            self.best_round = Some(metrics.round);
        }
        self.rounds.push(metrics);
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut cols = vec!["round".to_string(), "mean_acc".to_string()];
        cols.extend((0..self.clients).map(|i| format!("acc_client_{i}")));
        cols.extend(
            ["model_diff", "delta_sigma", "delta_tau", "uploaded_bytes", "secs"]
                .iter()
                .map(|s| s.to_string()),
        );
        cols
    }

    /// Fixed columns: `round, mean_acc, acc_client_0..N−1, model_diff,
    /// delta_sigma, delta_tau, uploaded_bytes, secs`. Reals use 17
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header().join(",");
        out.push('\n');
        for r in &self.rounds {
            let mut fields = vec![r.round.to_string(), fmt_real(r.mean_accuracy)];
            fields.extend(r.client_accuracy.iter().map(|&a| fmt_real(a)));
            fields.push(fmt_real(r.model_difference));
            fields.push(fmt_real(r.delta_sigma));
            fields.push(fmt_real(r.delta_tau));
            fields.push(r.uploaded_bytes.to_string());
            fields.push(fmt_real(r.secs));
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("invalid report JSON: {e}")))
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn emit_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    std::fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn emit_json(report: &ExperimentReport, path: &Path) -> Result<()> {
    std::fs::write(path, report.to_json()).map_err(|e| Error::io(path, e))
}
