use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Mlp,
    Cnn,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Mlp => "mlp",
            Architecture::Cnn => "cnn",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(Architecture::Mlp),
            "cnn" => Ok(Architecture::Cnn),
            other => Err(format!("unknown architecture `{other}` (expected mlp | cnn)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    FullyConnected,
    Convolutional,
}

/// One weight-bearing layer.
///
/// Convolutions are always followed by ReLU and 2×2 max pooling; dense layers
/// by ReLU except the last, which emits logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        pad: usize,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Dense { .. } => LayerKind::FullyConnected,
            LayerSpec::Conv { .. } => LayerKind::Convolutional,
        }
    }

    /// Shape of the full-rank weight: `I×O` or `I×O×K×K`.
    pub fn weight_shape(&self) -> Vec<usize> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => vec![inputs, outputs],
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![in_channels, out_channels, kernel, kernel],
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { outputs, .. } => outputs,
            LayerSpec::Conv { out_channels, .. } => out_channels,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Per-sample input shape: `[d]` for the MLP, `[C, H, W]` for the CNN.
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
    /// Whether each layer carries a low-rank personalized branch.
    pub decompose: Vec<bool>,
}

impl ModelSpec {
    /// `in → 64 → 32 → C` with ReLU.
    pub fn mlp(input_dim: usize, classes: usize) -> Result<Self> {
        Self::mlp_with_hidden(input_dim, &[64, 32], classes)
    }

    pub fn mlp_with_hidden(input_dim: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(classes);
        let layers: Vec<LayerSpec> = dims
            .windows(2)
            .map(|w| LayerSpec::Dense {
                inputs: w[0],
                outputs: w[1],
            })
            .collect();
        let spec = ModelSpec {
            architecture: Architecture::Mlp,
            input_shape: vec![input_dim],
            classes,
            decompose: vec![true; layers.len()],
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// conv(c→8, 3×3, pad 1) → ReLU → pool → conv(8→16, 3×3, pad 1) → ReLU → pool → fc(→C).
    pub fn cnn(channels: usize, height: usize, width: usize, classes: usize) -> Result<Self> {
        if height < 4 || width < 4 {
            return Err(Error::Validation(format!(
                "cnn input must be at least 4×4, got {height}×{width}"
            )));
        }
        let layers = vec![
            LayerSpec::Conv {
                in_channels: channels,
                out_channels: 8,
                kernel: 3,
                pad: 1,
            },
            LayerSpec::Conv {
                in_channels: 8,
                out_channels: 16,
                kernel: 3,
                pad: 1,
            },
            LayerSpec::Dense {
                inputs: 16 * (height / 2 / 2) * (width / 2 / 2),
                outputs: classes,
            },
        ];
        let spec = ModelSpec {
            architecture: Architecture::Cnn,
            input_shape: vec![channels, height, width],
            classes,
            decompose: vec![true; layers.len()],
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same architecture with every low-rank branch removed.
    pub fn without_decomposition(&self) -> Self {
        ModelSpec {
            decompose: vec![false; self.layers.len()],
            ..self.clone()
        }
    }

    pub fn input_numel(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Checks that consecutive layers chain and the head emits `classes` logits.
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.layers.is_empty() || self.decompose.len() != self.layers.len() {
            return Err(Error::Validation(
                "layer list empty or decomposition flags misaligned".into(),
            ));
        }
        let mut shape = self.input_shape.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    pad,
                } => {
                    if shape.len() != 3 || shape[0] != in_channels {
                        return Err(Error::Dimension(format!(
                            "layer {idx}: conv expects {in_channels} channels, incoming shape {shape:?}"
                        )));
                    }
                    if kernel == 0 || shape[1] + 2 * pad < kernel || shape[2] + 2 * pad < kernel {
                        return Err(Error::Dimension(format!(
                            "layer {idx}: kernel {kernel} larger than input {shape:?}"
                        )));
                    }
                    let h = shape[1] + 2 * pad - kernel + 1;
                    let w = shape[2] + 2 * pad - kernel + 1;
                    if h < 2 || w < 2 {
                        return Err(Error::Dimension(format!(
                            "layer {idx}: output {h}×{w} too small to pool"
                        )));
                    }
                    shape = vec![out_channels, h / 2, w / 2];
                }
                LayerSpec::Dense { inputs, outputs } => {
                    let incoming: usize = shape.iter().product();
                    if incoming != inputs {
                        return Err(Error::Dimension(format!(
                            "layer {idx}: dense expects {inputs} inputs, incoming shape {shape:?}"
                        )));
                    }
                    shape = vec![outputs];
                }
            }
            if layer.weight_shape().contains(&0) {
                return Err(Error::Validation(format!("layer {idx} has a zero dimension")));
            }
        }
        if shape != [self.classes] {
            return Err(Error::Dimension(format!(
                "final layer emits {shape:?}, expected [{}]",
                self.classes
            )));
        }
        Ok(())
    }
}
