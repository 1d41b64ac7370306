use super::params::{conv_tau_index_map, ModelParams, Phase};
use super::spec::{LayerKind, LayerSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::tensor::{apply_sgd, Gradients, Graph, Tensor, Var};

#[derive(Debug, Clone, Copy)]
struct BoundLayer {
    sigma: Var,
    factors: Option<(Var, Var)>,
    bias: Var,
}

/// Parameters placed on a tape, trainable or constant according to the
/// model's current [`Phase`].
#[derive(Debug, Clone)]
pub struct BoundModel {
    layers: Vec<BoundLayer>,
}

impl BoundModel {
    pub fn bind(graph: &mut Graph, params: &ModelParams) -> Self {
        Self::bind_with(graph, params, Some(params.phase()))
    }

    /// Binds everything as constants.
    pub fn bind_frozen(graph: &mut Graph, params: &ModelParams) -> Self {
        Self::bind_with(graph, params, None)
    }

    fn bind_with(graph: &mut Graph, params: &ModelParams, phase: Option<Phase>) -> Self {
        let sigma_trainable = phase.is_some_and(Phase::trains_sigma);
        let tau_trainable = phase.is_some_and(Phase::trains_tau);
        let leaf = |g: &mut Graph, t: &Tensor, trainable: bool| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        let layers = params
            .weights
            .iter()
            .zip(&params.biases)
            .map(|(w, b)| BoundLayer {
                sigma: leaf(graph, &w.sigma, sigma_trainable),
                factors: w.low_rank.as_ref().map(|lr| {
                    (
                        leaf(graph, &lr.factor_b, tau_trainable),
                        leaf(graph, &lr.factor_a, tau_trainable),
                    )
                }),
                bias: leaf(graph, b, sigma_trainable),
            })
            .collect();
        BoundModel { layers }
    }

    pub fn sigma_var(&self, layer: usize) -> Var {
        self.layers[layer].sigma
    }

    pub fn factor_vars(&self, layer: usize) -> Option<(Var, Var)> {
        self.layers[layer].factors
    }

    pub fn bias_var(&self, layer: usize) -> Var {
        self.layers[layer].bias
    }

    /// Differentiable `σ + τ` for one layer.
    pub fn effective_weight(&self, graph: &mut Graph, layer: usize, kind: LayerKind) -> Result<Var> {
        let bound = self.layers[layer];
        let Some((b, a)) = bound.factors else {
            return Ok(bound.sigma);
        };
        let product = graph.matmul(b, a)?;
        let tau = match kind {
            LayerKind::FullyConnected => product,
            LayerKind::Convolutional => {
                let shape = graph.value(bound.sigma).shape().to_vec();
                graph.gather(product, &shape, conv_tau_index_map(&shape))?
            }
        };
        graph.add(bound.sigma, tau)
    }
}

/// Logits `N×C` for a batch whose leading dimension is `N`.
pub fn forward(graph: &mut Graph, spec: &ModelSpec, model: &BoundModel, batch: Var) -> Result<Var> {
    let in_shape = graph.value(batch).shape().to_vec();
    let n = in_shape[0];
    let per_sample: usize = in_shape[1..].iter().product();
    if per_sample != spec.input_numel() {
        return Err(Error::Dimension(format!(
            "batch {in_shape:?} does not match model input {:?}",
            spec.input_shape
        )));
    }
    let mut shape = vec![n];
    shape.extend_from_slice(&spec.input_shape);
    let mut x = if in_shape == shape {
        batch
    } else {
        graph.reshape(batch, &shape)?
    };
    let last = spec.layers.len() - 1;
    for (idx, layer) in spec.layers.iter().enumerate() {
        let weight = model.effective_weight(graph, idx, layer.kind())?;
        match *layer {
            LayerSpec::Conv { pad, .. } => {
                let y = graph.conv2d(x, weight, pad)?;
                let y = graph.add_channel_bias(y, model.bias_var(idx))?;
                let y = graph.relu(y);
                x = graph.max_pool2(y)?;
            }
            LayerSpec::Dense { inputs, .. } => {
                if graph.value(x).shape() != [n, inputs] {
                    x = graph.reshape(x, &[n, inputs])?;
                }
                let y = graph.matmul(x, weight)?;
                let y = graph.add_bias(y, model.bias_var(idx))?;
                x = if idx == last { y } else { graph.relu(y) };
            }
        }
    }
    Ok(x)
}

/// Mean softmax cross-entropy of the model on one batch, recorded on `graph`.
pub fn loss(
    graph: &mut Graph,
    spec: &ModelSpec,
    model: &BoundModel,
    features: &Tensor,
    labels: &[usize],
) -> Result<Var> {
    let x = graph.constant(features.clone());
    let logits = forward(graph, spec, model, x)?;
    graph.softmax_cross_entropy(logits, labels)
}

/// Logits without recording gradients.
pub fn predict(spec: &ModelSpec, params: &ModelParams, features: &Tensor) -> Result<Tensor> {
    let mut graph = Graph::new();
    let model = BoundModel::bind_frozen(&mut graph, params);
    let x = graph.constant(features.clone());
    let logits = forward(&mut graph, spec, &model, x)?;
    Ok(graph.value(logits).clone())
}

/// Loss value without recording gradients.
pub fn evaluate_loss(spec: &ModelSpec, params: &ModelParams, features: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut graph = Graph::new();
    let model = BoundModel::bind_frozen(&mut graph, params);
    let l = loss(&mut graph, spec, &model, features, labels)?;
    Ok(graph.value(l).item())
}

/// Gradients of the batch loss for the tensors trainable under the model's phase.
pub fn gradients(
    spec: &ModelSpec,
    params: &ModelParams,
    features: &Tensor,
    labels: &[usize],
) -> Result<(f64, Graph, BoundModel, Gradients)> {
    let mut graph = Graph::new();
    let model = BoundModel::bind(&mut graph, params);
    let l = loss(&mut graph, spec, &model, features, labels)?;
    let grads = graph.backward(l)?;
    let value = graph.value(l).item();
    Ok((value, graph, model, grads))
}

/// One SGD step on one batch. Tensors frozen by the current phase are untouched.
pub fn train_step(
    spec: &ModelSpec,
    params: &mut ModelParams,
    features: &Tensor,
    labels: &[usize],
    learning_rate: f64,
) -> Result<f64> {
    let (value, _graph, model, grads) = gradients(spec, params, features, labels)?;
    for (idx, (w, b)) in params.weights.iter_mut().zip(params.biases.iter_mut()).enumerate() {
        if let Some(g) = grads.get(model.sigma_var(idx)) {
            apply_sgd(&mut w.sigma, g, learning_rate);
        }
        if let Some(g) = grads.get(model.bias_var(idx)) {
            apply_sgd(b, g, learning_rate);
        }
        if let (Some(lr), Some((bv, av))) = (w.low_rank.as_mut(), model.factor_vars(idx)) {
            if let Some(g) = grads.get(bv) {
                apply_sgd(&mut lr.factor_b, g, learning_rate);
            }
            if let Some(g) = grads.get(av) {
                apply_sgd(&mut lr.factor_a, g, learning_rate);
            }
        }
    }
    Ok(value)
}

/// Index of the largest logit per row; ties go to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let classes = logits.shape()[1];
    logits
        .data()
        .chunks(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
        })
        .collect()
}
