use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("malformed model document: {0}")]
    Malformed(String),
    #[error("layer {position}{}: {message}", fmt_name(.name))]
    Layer { position: usize, name: Option<String>, message: String },
    #[error("shape mismatch at layer {position} `{layer}`: n_in = {found} but `{previous}` produces {expected}")]
    ShapeMismatch { position: usize, layer: String, previous: String, expected: usize, found: usize },
    #[error("layer {position} `{layer}`: {message}")]
    Dimensions { position: usize, layer: String, message: String },
    #[error("layer {position} `{layer}`: non-finite {what} at {index:?}")]
    NonFinite { position: usize, layer: String, what: &'static str, index: (usize, usize) },
    #[error("duplicate layer name `{0}`")]
    DuplicateName(String),
    #[error("model needs input_size >= 1 and at least one layer")]
    Empty,
}

fn fmt_name(name: &Option<String>) -> String {
    name.as_ref().map(|n| format!(" `{n}`")).unwrap_or_default()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Softmax => "softmax",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseLayer {
    pub name: String,
    pub n_in: usize,
    pub n_out: usize,
    /// `n_out` rows of `n_in` weights.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationLayer {
    /// Defaults to `<kind>_<position>` when absent from the document.
    #[serde(default)]
    pub name: String,
    pub kind: ActivationKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense(DenseLayer),
    Activation(ActivationLayer),
}

impl Layer {
    pub fn name(&self) -> &str {
        match self {
            Layer::Dense(d) => &d.name,
            Layer::Activation(a) => &a.name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub name: String,
    pub input_size: usize,
    pub layers: Vec<Layer>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    name: String,
    input_size: usize,
    layers: Vec<Value>,
}

impl NetworkModel {
    /// Output width of the whole network.
    pub fn output_size(&self) -> usize {
        self.layers.iter().fold(self.input_size, |n, l| match l {
            Layer::Dense(d) => d.n_out,
            Layer::Activation(_) => n,
        })
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name() == name)
    }

    /// Shape, dimension, finiteness and naming checks.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_size == 0 || self.layers.is_empty() {
            return Err(ModelError::Empty);
        }
        let mut names = HashSet::new();
        let mut width = self.input_size;
        let mut previous = "input".to_string();
        for (position, layer) in self.layers.iter().enumerate() {
            if !names.insert(layer.name()) {
                return Err(ModelError::DuplicateName(layer.name().to_string()));
            }
            if let Layer::Dense(d) = layer {
                check_dense(position, d)?;
                if d.n_in != width {
                    return Err(ModelError::ShapeMismatch {
                        position,
                        layer: d.name.clone(),
                        previous,
                        expected: width,
                        found: d.n_in,
                    });
                }
                width = d.n_out;
                previous = d.name.clone();
            }
        }
        Ok(())
    }
}

fn check_dense(position: usize, d: &DenseLayer) -> Result<(), ModelError> {
    let dims = |message: String| ModelError::Dimensions { position, layer: d.name.clone(), message };
    if d.n_in == 0 || d.n_out == 0 {
        return Err(dims("n_in and n_out must be >= 1".into()));
    }
    if d.weights.len() != d.n_out {
        return Err(dims(format!("{} weight rows, expected n_out = {}", d.weights.len(), d.n_out)));
    }
    if let Some((r, row)) = d.weights.iter().enumerate().find(|(_, row)| row.len() != d.n_in) {
        return Err(dims(format!("weight row {r} has {} entries, expected n_in = {}", row.len(), d.n_in)));
    }
    if d.bias.len() != d.n_out {
        return Err(dims(format!("{} bias entries, expected n_out = {}", d.bias.len(), d.n_out)));
    }
    for (r, row) in d.weights.iter().enumerate() {
        if let Some(c) = row.iter().position(|w| !w.is_finite()) {
            return Err(ModelError::NonFinite { position, layer: d.name.clone(), what: "weight", index: (r, c) });
        }
    }
    if let Some(r) = d.bias.iter().position(|b| !b.is_finite()) {
        return Err(ModelError::NonFinite { position, layer: d.name.clone(), what: "bias", index: (r, 0) });
    }
    Ok(())
}

/// Parses and validates a JSON model document.
pub fn parse_model(text: &str) -> Result<NetworkModel, ModelError> {
    let raw: RawModel = serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
    let layers = raw
        .layers
        .into_iter()
        .enumerate()
        .map(|(position, value)| {
            let name = value.get("name").and_then(Value::as_str).map(str::to_string);
            let mut layer: Layer = serde_json::from_value(value).map_err(|e| ModelError::Layer {
                position,
                name,
                message: e.to_string(),
            })?;
            if let Layer::Activation(a) = &mut layer {
                if a.name.is_empty() {
                    a.name = format!("{}_{}", a.kind, position);
                }
            }
            Ok(layer)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let model = NetworkModel { name: raw.name, input_size: raw.input_size, layers };
    model.validate()?;
    Ok(model)
}
