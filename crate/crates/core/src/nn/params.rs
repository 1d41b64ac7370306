use serde::{Deserialize, Serialize};

use super::spec::{LayerKind, LayerSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::tensor::{SeededRng, Tensor};

/// Which tensors receive gradients during local training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Only the low-rank factors `B`, `A`.
    TauOnly,
    /// Only the full-rank weights and the biases.
    SigmaOnly,
    #[default]
    Joint,
}

impl Phase {
    pub fn trains_sigma(self) -> bool {
        matches!(self, Phase::SigmaOnly | Phase::Joint)
    }

    pub fn trains_tau(self) -> bool {
        matches!(self, Phase::TauOnly | Phase::Joint)
    }
}

/// Inner rank of the low-rank branch.
///
/// Fully-connected: `max(1, ⌊ratio·min(I,O)⌋)`; convolutional:
/// `max(1, ⌊ratio·min(I,O)·K⌋)`.
pub fn rank_for(kind: LayerKind, inputs: usize, outputs: usize, kernel: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Validation(format!(
            "rank ratio must lie in (0, 1], got {ratio}"
        )));
    }
    if inputs == 0 || outputs == 0 || kernel == 0 {
        return Err(Error::Validation(format!(
            "layer dimensions must be positive, got I={inputs} O={outputs} K={kernel}"
        )));
    }
    let base = inputs.min(outputs) as f64;
    let raw = match kind {
        LayerKind::FullyConnected => ratio * base,
        LayerKind::Convolutional => ratio * base * kernel as f64,
    };
    Ok((raw.floor() as usize).max(1))
}

/// The low-rank pair `(B, A)` with `τ = B·A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowRank {
    /// `I×r` (dense) or `(I·K)×r` (conv).
    pub factor_b: Tensor,
    /// `r×O` (dense) or `r×(O·K)` (conv).
    pub factor_a: Tensor,
}

impl LowRank {
    pub fn inner_rank(&self) -> usize {
        self.factor_b.shape()[1]
    }

    pub fn numel(&self) -> usize {
        self.factor_b.numel() + self.factor_a.numel()
    }
}

/// One layer's weight `θ = σ + τ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposedParam {
    pub kind: LayerKind,
    /// Full-rank shared weight, `I×O` or `I×O×K×K`.
    pub sigma: Tensor,
    /// Personalized branch; `None` for layers that are not decomposed.
    pub low_rank: Option<LowRank>,
}

impl DecomposedParam {
    pub fn inner_rank(&self) -> Option<usize> {
        self.low_rank.as_ref().map(LowRank::inner_rank)
    }

    fn kernel(&self) -> usize {
        match self.kind {
            LayerKind::FullyConnected => 1,
            LayerKind::Convolutional => self.sigma.shape()[2],
        }
    }

    /// Materialized `τ` in the shape of `sigma`; zeros when not decomposed.
    pub fn tau(&self) -> Tensor {
        match &self.low_rank {
            None => Tensor::zeros(self.sigma.shape()),
            Some(lr) => {
                let product = lr
                    .factor_b
                    .matmul(&lr.factor_a)
                    .expect("factor shapes fixed at construction");
                match self.kind {
                    LayerKind::FullyConnected => product,
                    LayerKind::Convolutional => {
                        let map = conv_tau_index_map(self.sigma.shape());
                        let data = map.iter().map(|&i| product.data()[i]).collect();
                        Tensor::new(self.sigma.shape().to_vec(), data).expect("map matches sigma")
                    }
                }
            }
        }
    }

    /// `σ + τ`.
    pub fn effective_weight(&self) -> Tensor {
        match &self.low_rank {
            None => self.sigma.clone(),
            Some(_) => self.sigma.add(&self.tau()).expect("tau mirrors sigma"),
        }
    }

    /// `τ` as the `(I·K)×(O·K)` (or `I×O`) product before reshaping.
    pub fn tau_matrix(&self) -> Option<Tensor> {
        self.low_rank
            .as_ref()
            .map(|lr| lr.factor_b.matmul(&lr.factor_a).expect("factor shapes fixed"))
    }

    pub(crate) fn validate_shapes(&self) -> Result<()> {
        if let Some(lr) = &self.low_rank {
            let (rows, cols) = match self.kind {
                LayerKind::FullyConnected => (self.sigma.shape()[0], self.sigma.shape()[1]),
                LayerKind::Convolutional => {
                    let k = self.kernel();
                    (self.sigma.shape()[0] * k, self.sigma.shape()[1] * k)
                }
            };
            let r = lr.factor_b.shape().get(1).copied().unwrap_or(0);
            if lr.factor_b.shape() != [rows, r] || lr.factor_a.shape() != [r, cols] {
                return Err(Error::Dimension(format!(
                    "factors {:?}·{:?} do not realize a {rows}×{cols} matrix",
                    lr.factor_b.shape(),
                    lr.factor_a.shape()
                )));
            }
        }
        Ok(())
    }
}

/// For a conv kernel of shape `I×O×K×K`, entry `j` of the flattened kernel is
/// taken from flat index `map[j]` of the `(I·K)×(O·K)` product, where product
/// entry `(i·K+k₁, o·K+k₂)` becomes kernel entry `(i, o, k₁, k₂)`.
pub fn conv_tau_index_map(kernel_shape: &[usize]) -> Vec<usize> {
    let (inputs, outputs, k) = (kernel_shape[0], kernel_shape[1], kernel_shape[2]);
    let row_len = outputs * k;
    let mut map = Vec::with_capacity(inputs * outputs * k * k);
    for i in 0..inputs {
        for o in 0..outputs {
            for k1 in 0..k {
                for k2 in 0..k {
                    map.push((i * k + k1) * row_len + o * k + k2);
                }
            }
        }
    }
    map
}

/// All weights and biases of one model instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<DecomposedParam>,
    pub biases: Vec<Tensor>,
    phase: Phase,
}

impl ModelParams {
    pub fn new(weights: Vec<DecomposedParam>, biases: Vec<Tensor>) -> Result<Self> {
        if weights.len() != biases.len() {
            return Err(Error::Dimension(format!(
                "{} weights but {} biases",
                weights.len(),
                biases.len()
            )));
        }
        for w in &weights {
            w.validate_shapes()?;
        }
        Ok(ModelParams {
            weights,
            biases,
            phase: Phase::Joint,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    /// Checks every tensor shape against `spec`.
    pub fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        if self.weights.len() != spec.layers.len() {
            return Err(Error::Dimension(format!(
                "model has {} layers, spec has {}",
                self.weights.len(),
                spec.layers.len()
            )));
        }
        for (idx, ((w, b), layer)) in self.weights.iter().zip(&self.biases).zip(&spec.layers).enumerate() {
            if w.sigma.shape() != layer.weight_shape().as_slice() || b.numel() != layer.bias_len() {
                return Err(Error::Dimension(format!(
                    "layer {idx}: weight {:?} / bias {:?} do not match spec {:?}",
                    w.sigma.shape(),
                    b.shape(),
                    layer
                )));
            }
            if w.low_rank.is_some() != spec.decompose[idx] {
                return Err(Error::Dimension(format!(
                    "layer {idx}: decomposition flag disagrees with spec"
                )));
            }
        }
        Ok(())
    }

    /// Shared-part element count: every `σ` and bias.
    pub fn sigma_numel(&self) -> usize {
        self.weights.iter().map(|w| w.sigma.numel()).sum::<usize>()
            + self.biases.iter().map(Tensor::numel).sum::<usize>()
    }

    /// Personalized-part element count: every `B` and `A`.
    pub fn tau_numel(&self) -> usize {
        self.weights
            .iter()
            .filter_map(|w| w.low_rank.as_ref())
            .map(LowRank::numel)
            .sum()
    }

    /// Element count trained under `phase`.
    pub fn trainable_numel(&self, phase: Phase) -> usize {
        let mut n = 0;
        if phase.trains_sigma() {
            n += self.sigma_numel();
        }
        if phase.trains_tau() {
            n += self.tau_numel();
        }
        n
    }

    /// `σ` and bias of each layer, in layer order, row-major.
    pub fn flatten_sigma(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.sigma_numel());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.sigma.data());
            out.extend_from_slice(b.data());
        }
        out
    }

    /// Inverse of [`flatten_sigma`](Self::flatten_sigma).
    pub fn load_sigma(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.sigma_numel() {
            return Err(Error::Dimension(format!(
                "flat sigma has {} values, model needs {}",
                flat.len(),
                self.sigma_numel()
            )));
        }
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for t in [&mut w.sigma, b] {
                let n = t.numel();
                t.data_mut().copy_from_slice(&flat[offset..offset + n]);
                offset += n;
            }
        }
        Ok(())
    }

    /// Materialized `τ = B·A` of each layer (reshaped for conv), concatenated.
    pub fn flatten_tau(&self) -> Vec<f64> {
        self.weights
            .iter()
            .flat_map(|w| w.tau().into_data())
            .collect()
    }

    /// `B` then `A` of each decomposed layer, concatenated.
    pub fn flatten_factors(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.tau_numel());
        for lr in self.weights.iter().filter_map(|w| w.low_rank.as_ref()) {
            out.extend_from_slice(lr.factor_b.data());
            out.extend_from_slice(lr.factor_a.data());
        }
        out
    }

    /// Inverse of [`flatten_factors`](Self::flatten_factors).
    pub fn load_factors(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.tau_numel() {
            return Err(Error::Dimension(format!(
                "flat factors have {} values, model needs {}",
                flat.len(),
                self.tau_numel()
            )));
        }
        let mut offset = 0;
        for lr in self.weights.iter_mut().filter_map(|w| w.low_rank.as_mut()) {
            for t in [&mut lr.factor_b, &mut lr.factor_a] {
                let n = t.numel();
                t.data_mut().copy_from_slice(&flat[offset..offset + n]);
                offset += n;
            }
        }
        Ok(())
    }

    /// Weights and bias of one layer, flattened.
    pub fn flatten_layer_sigma(&self, layer: usize) -> Vec<f64> {
        let mut out = self.weights[layer].sigma.data().to_vec();
        out.extend_from_slice(self.biases[layer].data());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| {
            w.sigma.is_finite()
                && w
                    .low_rank
                    .as_ref()
                    .is_none_or(|lr| lr.factor_a.is_finite() && lr.factor_b.is_finite())
        }) && self.biases.iter().all(Tensor::is_finite)
    }
}

/// Ranks for every decomposed layer of `spec`.
pub fn layer_ranks(spec: &ModelSpec, ratio_fc: f64, ratio_conv: f64) -> Result<Vec<Option<usize>>> {
    spec.layers
        .iter()
        .zip(&spec.decompose)
        .map(|(layer, &dec)| {
            if !dec {
                return Ok(None);
            }
            let r = match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    rank_for(LayerKind::FullyConnected, inputs, outputs, 1, ratio_fc)?
                }
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => rank_for(LayerKind::Convolutional, in_channels, out_channels, kernel, ratio_conv)?,
            };
            Ok(Some(r))
        })
        .collect()
}

/// Fresh parameters: `σ` Kaiming-uniform (fan-in), `A ~ N(0, 1/r)`, `B = 0`,
/// biases 0. All `σ` are drawn before any `A`, so the shared part does not
/// depend on which layers are decomposed.
pub fn init_decomposed(spec: &ModelSpec, ratio_fc: f64, ratio_conv: f64, rng: &mut SeededRng) -> Result<ModelParams> {
    spec.validate()?;
    let ranks = layer_ranks(spec, ratio_fc, ratio_conv)?;
    let mut weights = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        let bound = (6.0 / layer.fan_in() as f64).sqrt();
        let shape = layer.weight_shape();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform_range(-bound, bound)).collect();
        weights.push(DecomposedParam {
            kind: layer.kind(),
            sigma: Tensor::new(shape, data)?,
            low_rank: None,
        });
    }
    for ((w, layer), rank) in weights.iter_mut().zip(&spec.layers).zip(&ranks) {
        if let Some(r) = *rank {
            let (rows, cols) = factor_dims(layer);
            w.low_rank = Some(LowRank {
                factor_b: Tensor::zeros(&[rows, r]),
                factor_a: gaussian_factor(r, cols, rng),
            });
        }
    }
    let biases = spec.layers.iter().map(|l| Tensor::zeros(&[l.bias_len()])).collect();
    ModelParams::new(weights, biases)
}

/// Redraws every `A` from `rng` and zeroes every `B`, leaving `σ` and biases alone.
pub fn reinit_factors(params: &mut ModelParams, rng: &mut SeededRng) {
    for lr in params.weights.iter_mut().filter_map(|w| w.low_rank.as_mut()) {
        let (r, cols) = (lr.factor_a.shape()[0], lr.factor_a.shape()[1]);
        lr.factor_a = gaussian_factor(r, cols, rng);
        lr.factor_b = Tensor::zeros(lr.factor_b.shape());
    }
}

fn gaussian_factor(rank: usize, cols: usize, rng: &mut SeededRng) -> Tensor {
    let std = 1.0 / (rank as f64).sqrt();
    let data = (0..rank * cols).map(|_| std * rng.gaussian()).collect();
    Tensor::new(vec![rank, cols], data).expect("positive dims")
}

/// Rows of `B` and columns of `A`.
fn factor_dims(layer: &LayerSpec) -> (usize, usize) {
    match *layer {
        LayerSpec::Dense { inputs, outputs } => (inputs, outputs),
        LayerSpec::Conv {
            in_channels,
            out_channels,
            kernel,
            ..
        } => (in_channels * kernel, out_channels * kernel),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_for(LayerKind::FullyConnected, 6, 4, 1, 0.5).unwrap(), 2);
        assert_eq!(rank_for(LayerKind::Convolutional, 3, 8, 3, 0.25).unwrap(), 2);
        assert_eq!(rank_for(LayerKind::FullyConnected, 2, 2, 1, 0.1).unwrap(), 1);
    }

    #[test]
    fn rank_ratio_range() {
        for bad in [0.0, -0.5, 1.01, f64::NAN] {
            assert!(matches!(
                rank_for(LayerKind::FullyConnected, 4, 4, 1, bad),
                Err(Error::Validation(_))
            ));
        }
        assert_eq!(rank_for(LayerKind::FullyConnected, 4, 7, 1, 1.0).unwrap(), 4);
    }

    #[test]
    fn init_zeroes_b_and_is_deterministic() {
        let spec = ModelSpec::cnn(1, 8, 8, 3).unwrap();
        let a = init_decomposed(&spec, 0.5, 0.5, &mut SeededRng::new(42)).unwrap();
        let b = init_decomposed(&spec, 0.5, 0.5, &mut SeededRng::new(42)).unwrap();
        assert_eq!(a, b);
        for w in &a.weights {
            let lr = w.low_rank.as_ref().unwrap();
            assert!(lr.factor_b.data().iter().all(|&v| v == 0.0));
            assert_eq!(w.effective_weight(), w.sigma);
        }
        assert!(a.flatten_tau().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_factor_shapes() {
        let spec = ModelSpec::cnn(1, 8, 8, 3).unwrap();
        let p = init_decomposed(&spec, 0.5, 0.25, &mut SeededRng::new(1)).unwrap();
        let lr = p.weights[1].low_rank.as_ref().unwrap();
        // I=8, O=16, K=3: r' = floor(0.25·8·3) = 6
        assert_eq!(lr.factor_b.shape(), &[24, 6]);
        assert_eq!(lr.factor_a.shape(), &[6, 48]);
    }

    #[test]
    fn shared_part_independent_of_decomposition_flags() {
        let spec = ModelSpec::mlp(5, 3).unwrap();
        let a = init_decomposed(&spec, 0.5, 0.5, &mut SeededRng::new(9)).unwrap();
        let b = init_decomposed(&spec.without_decomposition(), 0.5, 0.5, &mut SeededRng::new(9)).unwrap();
        assert_eq!(a.flatten_sigma(), b.flatten_sigma());
        assert_eq!(b.tau_numel(), 0);
    }

    #[test]
    fn hand_worked_effective_weight() {
        let w = DecomposedParam {
            kind: LayerKind::FullyConnected,
            sigma: Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]),
            low_rank: Some(LowRank {
                factor_b: Tensor::from_rows(&[&[1.0], &[0.0]]),
                factor_a: Tensor::from_rows(&[&[0.0, 1.0]]),
            }),
        };
        assert_eq!(w.effective_weight(), Tensor::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]));
    }

    #[test]
    fn conv_tau_reshape_small_case() {
        let w = DecomposedParam {
            kind: LayerKind::Convolutional,
            sigma: Tensor::zeros(&[1, 1, 2, 2]),
            low_rank: Some(LowRank {
                factor_b: Tensor::from_rows(&[&[1.0], &[0.0]]),
                factor_a: Tensor::from_rows(&[&[1.0, 2.0]]),
            }),
        };
        assert_eq!(w.tau().data(), &[1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn conv_tau_reshape_matches_index_enumeration() {
        let (i_n, o_n, k) = (2, 3, 2);
        let mut rng = SeededRng::new(5);
        let b = Tensor::new(vec![i_n * k, 2], (0..i_n * k * 2).map(|_| rng.gaussian()).collect()).unwrap();
        let a = Tensor::new(vec![2, o_n * k], (0..2 * o_n * k).map(|_| rng.gaussian()).collect()).unwrap();
        let product = b.matmul(&a).unwrap();
        let w = DecomposedParam {
            kind: LayerKind::Convolutional,
            sigma: Tensor::zeros(&[i_n, o_n, k, k]),
            low_rank: Some(LowRank {
                factor_b: b,
                factor_a: a,
            }),
        };
        let tau = w.tau();
        for i in 0..i_n {
            for o in 0..o_n {
                for k1 in 0..k {
                    for k2 in 0..k {
                        let expected = product.at2(i * k + k1, o * k + k2);
                        let got = tau.data()[((i * o_n + o) * k + k1) * k + k2];
                        assert_eq!(got, expected);
                    }
                }
            }
        }
    }

    #[test]
    fn flatten_sigma_round_trip() {
        let spec = ModelSpec::mlp(4, 3).unwrap();
        let p = init_decomposed(&spec, 0.5, 0.5, &mut SeededRng::new(2)).unwrap();
        let flat = p.flatten_sigma();
        let mut q = init_decomposed(&spec, 0.5, 0.5, &mut SeededRng::new(3)).unwrap();
        q.load_sigma(&flat).unwrap();
        assert_eq!(q.flatten_sigma(), flat);
        let factors = p.flatten_factors();
        q.load_factors(&factors).unwrap();
        assert_eq!(q, p);
    }
}
