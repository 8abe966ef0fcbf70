//! Architecture descriptions, shape inference and parameter counting.

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::fontrender::NUM_CLASSES;
use crate::raster::SIDE;

/// Spatial size of every convolution kernel (3×3, valid padding).
pub const KERNEL: usize = 3;
/// Max-pool window and stride.
pub const POOL: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Flatten,
    Dense { units: usize },
    Conv2d { filters: usize },
    MaxPool2d,
    Relu,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fc,
    Cnn,
}

impl ModelKind {
    pub fn tag(self) -> u8 {
        match self {
            ModelKind::Fc => 0,
            ModelKind::Cnn => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ModelKind::Fc),
            1 => Some(ModelKind::Cnn),
            _ => None,
        }
    }

    /// Per-sample input shape for a 28×28 raster.
    pub fn input_shape(self) -> Vec<usize> {
        match self {
            ModelKind::Fc => vec![SIDE, SIDE],
            ModelKind::Cnn => vec![SIDE, SIDE, 1],
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fc" => Ok(ModelKind::Fc),
            "cnn" => Ok(ModelKind::Cnn),
            other => Err(format!("unknown model kind '{other}' (expected fc or cnn)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Fc => "fc",
            ModelKind::Cnn => "cnn",
        })
    }
}

/// A layer sequence plus the per-sample input shape it consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

/// flatten → dense(1024)+relu → dense(512)+relu → dense(13) → softmax.
pub fn build_fc_model() -> ModelSpec {
    ModelSpec::fc(1024, 512, NUM_CLASSES)
}

/// conv(64)+relu → pool → conv(128)+relu → pool → flatten → dense(13) → softmax.
pub fn build_cnn_model() -> ModelSpec {
    ModelSpec::cnn(64, 128, NUM_CLASSES)
}

impl ModelSpec {
    pub fn fc(hidden1: usize, hidden2: usize, classes: usize) -> Self {
        use LayerSpec::*;
        Self {
            kind: ModelKind::Fc,
            input_shape: ModelKind::Fc.input_shape(),
            layers: vec![
                Flatten,
                Dense { units: hidden1 },
                Relu,
                Dense { units: hidden2 },
                Relu,
                Dense { units: classes },
                Softmax,
            ],
        }
    }

    pub fn cnn(filters1: usize, filters2: usize, classes: usize) -> Self {
        use LayerSpec::*;
        Self {
            kind: ModelKind::Cnn,
            input_shape: ModelKind::Cnn.input_shape(),
            layers: vec![
                Conv2d { filters: filters1 },
                Relu,
                MaxPool2d,
                Conv2d { filters: filters2 },
                Relu,
                MaxPool2d,
                Flatten,
                Dense { units: classes },
                Softmax,
            ],
        }
    }

    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Fc => build_fc_model(),
            ModelKind::Cnn => build_cnn_model(),
        }
    }

    /// Per-sample shapes: the input followed by each layer's output.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = shapes.last().expect("non-empty");
            shapes.push(layer_output_shape(layer, prev).map_err(|msg| {
                NnError::InvalidArchitecture(format!("layer {i} ({layer:?}): {msg}"))
            })?);
        }
        Ok(shapes)
    }

    pub fn output_dim(&self) -> Result<usize, NnError> {
        let chain = self.shape_chain()?;
        Ok(chain.last().expect("non-empty").iter().product())
    }

    /// Shapes of (weight, bias) for each layer, `None` for parameterless layers.
    pub fn param_shapes(&self) -> Result<Vec<Option<(Vec<usize>, Vec<usize>)>>, NnError> {
        let chain = self.shape_chain()?;
        Ok(self
            .layers
            .iter()
            .zip(&chain)
            .map(|(layer, input)| match *layer {
                LayerSpec::Dense { units } => Some((vec![input[0], units], vec![units])),
                LayerSpec::Conv2d { filters } => {
                    Some((vec![KERNEL, KERNEL, input[2], filters], vec![filters]))
                }
                _ => None,
            })
            .collect())
    }

    /// Trainable parameter count of every layer, zero for parameterless ones.
    pub fn layer_param_counts(&self) -> Result<Vec<usize>, NnError> {
        Ok(self
            .param_shapes()?
            .into_iter()
            .map(|p| match p {
                Some((w, b)) => w.iter().product::<usize>() + b.iter().product::<usize>(),
                None => 0,
            })
            .collect())
    }

    pub fn param_count(&self) -> Result<usize, NnError> {
        Ok(self.layer_param_counts()?.iter().sum())
    }

    /// Checks the layer chain and that it ends in a softmax over a vector.
    pub fn validate(&self) -> Result<(), NnError> {
        let chain = self.shape_chain()?;
        if self.layers.last() != Some(&LayerSpec::Softmax) {
            return Err(NnError::InvalidArchitecture(
                "final layer must be softmax".into(),
            ));
        }
        if self.layers[..self.layers.len() - 1].contains(&LayerSpec::Softmax) {
            return Err(NnError::InvalidArchitecture(
                "softmax is only supported as the final layer".into(),
            ));
        }
        if chain.last().map(Vec::len) != Some(1) {
            return Err(NnError::InvalidArchitecture("output must be a vector".into()));
        }
        Ok(())
    }
}

fn layer_output_shape(layer: &LayerSpec, input: &[usize]) -> Result<Vec<usize>, String> {
    match *layer {
        LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        LayerSpec::Relu => Ok(input.to_vec()),
        LayerSpec::Softmax | LayerSpec::Dense { .. } if input.len() != 1 => {
            Err(format!("expects a vector input, got {input:?}"))
        }
        LayerSpec::Softmax => Ok(input.to_vec()),
        LayerSpec::Dense { units } if units == 0 => Err("zero units".into()),
        LayerSpec::Dense { units } => Ok(vec![units]),
        LayerSpec::Conv2d { .. } | LayerSpec::MaxPool2d if input.len() != 3 => {
            Err(format!("expects an (h, w, c) input, got {input:?}"))
        }
        LayerSpec::Conv2d { filters } => {
            if filters == 0 || input[0] < KERNEL || input[1] < KERNEL || input[2] == 0 {
                Err(format!("cannot convolve {input:?} with {filters} filters"))
            } else {
                Ok(vec![input[0] - KERNEL + 1, input[1] - KERNEL + 1, filters])
            }
        }
        LayerSpec::MaxPool2d => {
            if input[0] < POOL || input[1] < POOL {
                Err(format!("cannot pool {input:?}"))
            } else {
                Ok(vec![input[0] / POOL, input[1] / POOL, input[2]])
            }
        }
    }
}
