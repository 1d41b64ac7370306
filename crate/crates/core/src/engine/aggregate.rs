use serde::{Deserialize, Serialize};

use super::mode::SharedPart;
use crate::error::{Error, Result};
use crate::nn::ModelParams;
use crate::tensor::Tensor;

/// The tensors a client uploads (or the server broadcasts) for one
/// [`SharedPart`]. Built only through [`SharedTensors::extract`], so a
/// `Sigma` upload can never carry low-rank factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedTensors {
    part: SharedPart,
    tensors: Vec<Tensor>,
}

impl SharedTensors {
    pub fn extract(params: &ModelParams, part: SharedPart) -> Self {
        let mut tensors = Vec::new();
        let layers = params.layer_count();
        for (idx, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
            let sigma = match part {
                SharedPart::Sigma | SharedPart::SigmaAndFactors => true,
                SharedPart::SigmaExceptHead => idx + 1 < layers,
                SharedPart::Nothing | SharedPart::Factors => false,
            };
            if sigma {
                tensors.push(w.sigma.clone());
                tensors.push(b.clone());
            }
            if part.includes_factors() {
                if let Some(lr) = &w.low_rank {
                    tensors.push(lr.factor_b.clone());
                    tensors.push(lr.factor_a.clone());
                }
            }
        }
        SharedTensors { part, tensors }
    }

    /// Overwrites the matching tensors of `params`.
    pub fn install(&self, params: &mut ModelParams) -> Result<()> {
        let template = Self::extract(params, self.part);
        check_aligned(&template, self)?;
        let mut it = self.tensors.iter();
        let layers = params.layer_count();
        for (idx, (w, b)) in params.weights.iter_mut().zip(params.biases.iter_mut()).enumerate() {
            let sigma = match self.part {
                SharedPart::Sigma | SharedPart::SigmaAndFactors => true,
                SharedPart::SigmaExceptHead => idx + 1 < layers,
                SharedPart::Nothing | SharedPart::Factors => false,
            };
            if sigma {
                w.sigma = it.next().expect("aligned").clone();
                *b = it.next().expect("aligned").clone();
            }
            if self.part.includes_factors() {
                if let Some(lr) = w.low_rank.as_mut() {
                    lr.factor_b = it.next().expect("aligned").clone();
                    lr.factor_a = it.next().expect("aligned").clone();
                }
            }
        }
        Ok(())
    }

    pub fn part(&self) -> SharedPart {
        self.part
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Upload size at 8 bytes per value.
    pub fn byte_len(&self) -> u64 {
        self.numel() as u64 * 8
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }
}

fn check_aligned(a: &SharedTensors, b: &SharedTensors) -> Result<()> {
    if a.part != b.part {
        return Err(Error::Contract(format!(
            "shared parts differ: {:?} vs {:?}",
            a.part, b.part
        )));
    }
    if a.tensors.len() != b.tensors.len() {
        return Err(Error::Dimension(format!(
            "{} tensors vs {} tensors",
            a.tensors.len(),
            b.tensors.len()
        )));
    }
    for (x, y) in a.tensors.iter().zip(&b.tensors) {
        if x.shape() != y.shape() {
            return Err(Error::Dimension(format!(
                "shared tensor shapes differ: {:?} vs {:?}",
                x.shape(),
                y.shape()
            )));
        }
    }
    Ok(())
}

/// Unweighted elementwise mean, summed in the order given.
///
/// Computed as `x₀ + Σₖ(xₖ − x₀)/K`, which returns `x₀` bit for bit when all
/// uploads agree.
pub fn mean_shared(uploads: &[SharedTensors]) -> Result<SharedTensors> {
    let first = uploads
        .first()
        .ok_or_else(|| Error::Contract("aggregation over zero participants".into()))?;
    for u in &uploads[1..] {
        check_aligned(first, u)?;
    }
    let k = uploads.len() as f64;
    let tensors = first
        .tensors
        .iter()
        .enumerate()
        .map(|(ti, base)| {
            let mut acc = vec![0.0; base.numel()];
            for u in &uploads[1..] {
                for ((a, &x), &x0) in acc.iter_mut().zip(u.tensors[ti].data()).zip(base.data()) {
                    *a += x - x0;
                }
            }
            let data = base.data().iter().zip(&acc).map(|(&x0, &d)| x0 + d / k).collect();
            Tensor::new(base.shape().to_vec(), data).expect("shape copied from base")
        })
        .collect();
    Ok(SharedTensors {
        part: first.part,
        tensors,
    })
}

/// Server state: the aggregated shared tensors and the round counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalModel {
    pub shared: SharedTensors,
    pub round: usize,
}

impl GlobalModel {
    pub fn new(shared: SharedTensors) -> Self {
        GlobalModel { shared, round: 0 }
    }

    /// Mean of the participants' uploads; advances the round counter.
    pub fn aggregate(&self, uploads: &[SharedTensors]) -> Result<GlobalModel> {
        if let Some(u) = uploads.first() {
            check_aligned(&self.shared, u)?;
        }
        Ok(GlobalModel {
            shared: mean_shared(uploads)?,
            round: self.round + 1,
        })
    }
}
