use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{argmax_rows, predict, ModelParams, ModelSpec};

const EVAL_CHUNK: usize = 256;

/// Top-1 accuracy of `params` on the samples `indices` of `data`.
/// Ties between logits resolve to the lowest class index.
pub fn accuracy(spec: &ModelSpec, params: &ModelParams, data: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Capacity("accuracy requested on an empty shard".into()));
    }
    let mut correct = 0usize;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, y) = data.batch(chunk)?;
        let logits = predict(spec, params, &x)?;
        correct += argmax_rows(&logits).iter().zip(&y).filter(|(p, t)| p == t).count();
    }
    Ok(correct as f64 / indices.len() as f64)
}

/// Euclidean distance between two flattened parameter vectors.
pub fn distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "cannot compare vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// `(1/N) Σᵢ ‖σᵢ − σ̄‖₂` over flattened shared parameters.
pub fn model_difference(client_sigmas: &[Vec<f64>], global_sigma: &[f64]) -> Result<f64> {
    if client_sigmas.is_empty() {
        return Err(Error::Contract("model difference over zero clients".into()));
    }
    let mut total = 0.0;
    for s in client_sigmas {
        total += distance(s, global_sigma)?;
    }
    Ok(total / client_sigmas.len() as f64)
}

/// Snapshots needed for the shared / personalized drift norms.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DriftHistory {
    /// Global shared vector before any local update.
    pub sigma_first: Option<Vec<f64>>,
    /// Global shared vector after the latest round.
    pub sigma_last: Option<Vec<f64>>,
    /// Each client's materialized `τ` before any local update.
    pub tau_first: Option<Vec<Vec<f64>>>,
    /// Each client's materialized `τ` after the latest round.
    pub tau_last: Option<Vec<Vec<f64>>>,
}

impl DriftHistory {
    pub fn start(sigma: Vec<f64>, taus: Vec<Vec<f64>>) -> Self {
        DriftHistory {
            sigma_first: Some(sigma.clone()),
            sigma_last: Some(sigma),
            tau_first: Some(taus.clone()),
            tau_last: Some(taus),
        }
    }

    pub fn record(&mut self, sigma: Vec<f64>, taus: Vec<Vec<f64>>) {
        self.sigma_last = Some(sigma);
        self.tau_last = Some(taus);
    }
}

/// `(‖σ̄ᵀ − σ̄¹‖₂, (1/N) Σᵢ ‖τᵢᵀ − τᵢ¹‖₂)`.
pub fn delta_norms(history: &DriftHistory) -> Result<(f64, f64)> {
    let missing = || Error::Contract("drift history lacks a first or last snapshot".into());
    let s1 = history.sigma_first.as_ref().ok_or_else(missing)?;
    let st = history.sigma_last.as_ref().ok_or_else(missing)?;
    let t1 = history.tau_first.as_ref().ok_or_else(missing)?;
    let tt = history.tau_last.as_ref().ok_or_else(missing)?;
    let delta_sigma = distance(st, s1)?;
    if t1.len() != tt.len() {
        return Err(Error::Dimension(format!(
            "{} initial tau snapshots vs {} final",
            t1.len(),
            tt.len()
        )));
    }
    let delta_tau = if t1.is_empty() {
        0.0
    } else {
        let mut total = 0.0;
        for (a, b) in tt.iter().zip(t1) {
            total += distance(a, b)?;
        }
        total / t1.len() as f64
    };
    Ok((delta_sigma, delta_tau))
}
