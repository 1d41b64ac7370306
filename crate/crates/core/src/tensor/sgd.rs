use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Plain SGD: no momentum, no weight decay, no state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
}

impl SgdConfig {
    /// `learning_rate` must be finite and non-negative. Zero is accepted so a
    /// run can be frozen; positive values are the normal case.
    pub fn new(learning_rate: f64) -> Result<Self> {
        if !learning_rate.is_finite() || learning_rate < 0.0 {
            return Err(Error::Validation(format!(
                "learning rate must be a non-negative finite number, got {learning_rate}"
            )));
        }
        Ok(SgdConfig { learning_rate })
    }
}

/// `p ← p − lr·g` for every aligned pair.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[&Tensor], cfg: SgdConfig) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Contract(format!(
            "sgd_step: {} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    if let Some((p, g)) = params
        .iter()
        .zip(grads)
        .find(|(p, g)| p.shape() != g.shape())
    {
        return Err(Error::Contract(format!(
            "sgd_step: parameter {:?} paired with gradient {:?}",
            p.shape(),
            g.shape()
        )));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        apply(p, g, cfg.learning_rate);
    }
    Ok(())
}

pub(crate) fn apply(param: &mut Tensor, grad: &Tensor, lr: f64) {
    for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
        *p -= lr * g;
    }
}
