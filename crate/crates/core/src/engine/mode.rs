use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training regime of a federation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Alternating τ-then-σ local training; σ aggregated, τ private.
    FedDecomp,
    /// Plain model, σ trained all epochs and aggregated.
    FedAvg,
    /// Plain model, never aggregated.
    Local,
    /// Decomposed model trained jointly, never aggregated.
    LocalLowRank,
    /// Decomposed model trained jointly; σ, B and A all aggregated.
    FedAvgLowRank,
    /// Decomposed model trained jointly; only σ aggregated.
    Simultaneous,
    /// Alternating schedule; B and A aggregated, σ private.
    FedDecompReverse,
    /// Plain model; every layer except the last dense layer aggregated.
    FedPer,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::FedDecomp,
        Mode::FedAvg,
        Mode::Local,
        Mode::LocalLowRank,
        Mode::FedAvgLowRank,
        Mode::Simultaneous,
        Mode::FedDecompReverse,
        Mode::FedPer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FedDecomp => "feddecomp",
            Mode::FedAvg => "fedavg",
            Mode::Local => "local",
            Mode::LocalLowRank => "local-lowrank",
            Mode::FedAvgLowRank => "fedavg-lowrank",
            Mode::Simultaneous => "simultaneous",
            Mode::FedDecompReverse => "feddecomp-reverse",
            Mode::FedPer => "fedper",
        }
    }

    /// Whether the model carries a low-rank branch.
    pub fn decomposed(self) -> bool {
        !matches!(self, Mode::FedAvg | Mode::Local | Mode::FedPer)
    }

    /// Which tensors leave the client.
    pub fn shared_part(self) -> SharedPart {
        match self {
            Mode::FedDecomp | Mode::FedAvg | Mode::Simultaneous => SharedPart::Sigma,
            Mode::Local | Mode::LocalLowRank => SharedPart::Nothing,
            Mode::FedAvgLowRank => SharedPart::SigmaAndFactors,
            Mode::FedDecompReverse => SharedPart::Factors,
            Mode::FedPer => SharedPart::SigmaExceptHead,
        }
    }

    /// Whether `B`/`A` are drawn per client rather than broadcast.
    pub fn personal_factors(self) -> bool {
        self.decomposed() && !self.shared_part().includes_factors()
    }

    /// Whether local training runs the τ phase and then the σ phase.
    pub fn alternating(self) -> bool {
        matches!(self, Mode::FedDecomp | Mode::FedDecompReverse)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Mode::ALL.iter().map(|m| m.as_str()).collect();
                format!("unknown mode `{s}` (expected one of {})", names.join(" | "))
            })
    }
}

/// Subset of a client's parameters sent to the server.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SharedPart {
    Nothing,
    /// Every full-rank weight and bias.
    Sigma,
    /// Every `B` and `A`.
    Factors,
    SigmaAndFactors,
    /// Full-rank weights and biases of all layers but the last.
    SigmaExceptHead,
}

impl SharedPart {
    pub fn includes_factors(self) -> bool {
        matches!(self, SharedPart::Factors | SharedPart::SigmaAndFactors)
    }

    pub fn aggregates(self) -> bool {
        self != SharedPart::Nothing
    }
}

/// Local epoch budget, split between the τ phase and the σ phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub epochs: usize,
    pub lora_epochs: usize,
    pub mode: Mode,
}

impl ScheduleConfig {
    pub fn new(mode: Mode, epochs: usize, lora_epochs: usize) -> Result<Self> {
        if lora_epochs > epochs {
            return Err(Error::Validation(format!(
                "E_lora = {lora_epochs} exceeds E = {epochs}"
            )));
        }
        Ok(ScheduleConfig {
            epochs,
            lora_epochs,
            mode,
        })
    }

    pub fn global_epochs(&self) -> usize {
        self.epochs - self.lora_epochs
    }
}
