use serde::{Deserialize, Serialize};

use super::mode::ScheduleConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{train_step, ModelParams, ModelSpec, Phase};
use crate::tensor::SeededRng;

/// Step size and batch size for local SGD.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTraining {
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl LocalTraining {
    pub fn new(learning_rate: f64, batch_size: usize) -> Result<Self> {
        if !learning_rate.is_finite() || learning_rate < 0.0 {
            return Err(Error::Validation(format!(
                "learning rate must be finite and non-negative, got {learning_rate}"
            )));
        }
        if batch_size == 0 {
            return Err(Error::Validation("batch size must be at least 1".into()));
        }
        Ok(LocalTraining {
            learning_rate,
            batch_size,
        })
    }
}

/// One client's private state.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientState {
    pub id: usize,
    pub model: ModelParams,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Per-epoch shuffling stream.
    pub rng: SeededRng,
}

impl ClientState {
    /// Runs `epochs` passes over the training shard in `phase`. Each epoch
    /// reshuffles the shard; the trailing short batch is kept.
    pub fn train_epochs(
        &mut self,
        spec: &ModelSpec,
        data: &Dataset,
        phase: Phase,
        epochs: usize,
        training: LocalTraining,
    ) -> Result<()> {
        if epochs == 0 {
            return Ok(());
        }
        if self.train.is_empty() {
            return Err(Error::Capacity(format!("client {} has an empty training shard", self.id)));
        }
        self.model.set_phase(phase);
        let mut order = self.train.clone();
        for _ in 0..epochs {
            self.rng.shuffle(&mut order);
            for batch in order.chunks(training.batch_size) {
                let (x, y) = data.batch(batch)?;
                let loss = train_step(spec, &mut self.model, &x, &y, training.learning_rate)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "client {}: loss became {loss} during {phase:?} training",
                        self.id
                    )));
                }
            }
        }
        if !self.model.is_finite() {
            return Err(Error::Numeric(format!(
                "client {}: parameters became non-finite",
                self.id
            )));
        }
        Ok(())
    }

    /// τ phase: `E_lora` epochs on `B`, `A` with `σ` and biases frozen.
    pub fn local_update_tau(
        &mut self,
        spec: &ModelSpec,
        data: &Dataset,
        schedule: &ScheduleConfig,
        training: LocalTraining,
    ) -> Result<()> {
        self.train_epochs(spec, data, Phase::TauOnly, schedule.lora_epochs, training)
    }

    /// σ phase: `E − E_lora` epochs on `σ` and biases with `B`, `A` frozen.
    pub fn local_update_sigma(
        &mut self,
        spec: &ModelSpec,
        data: &Dataset,
        schedule: &ScheduleConfig,
        training: LocalTraining,
    ) -> Result<()> {
        self.train_epochs(spec, data, Phase::SigmaOnly, schedule.global_epochs(), training)
    }

    /// Applies the mode's whole local schedule for one round.
    pub fn local_round(
        &mut self,
        spec: &ModelSpec,
        data: &Dataset,
        schedule: &ScheduleConfig,
        training: LocalTraining,
    ) -> Result<()> {
        let mode = schedule.mode;
        if mode.alternating() {
            self.local_update_tau(spec, data, schedule, training)?;
            self.local_update_sigma(spec, data, schedule, training)
        } else if mode.decomposed() {
            self.train_epochs(spec, data, Phase::Joint, schedule.epochs, training)
        } else {
            self.train_epochs(spec, data, Phase::SigmaOnly, schedule.epochs, training)
        }
    }
}
