//! Minimal dense feed-forward network with exact backpropagation.
//!
//! A model is a stack of activation layers (dense affine map plus a scalar
//! activation) followed by a linear output head feeding softmax
//! cross-entropy. Activations can be the exact scalar functions, fitted
//! polynomial series, or a region hybrid that applies the series inside an
//! interval and the exact function outside. Substitution swaps activations
//! only; weights and biases are never touched.

pub mod train;

use crate::activation::ScalarActivation;
use crate::approx::HermiteSeries;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Applies the fitted series inside `[lo, hi]` (boundary points included)
/// and the exact base activation outside.
#[derive(Debug, Clone)]
pub struct RegionHybrid {
    pub base: ScalarActivation,
    pub series: HermiteSeries,
    pub lo: f64,
    pub hi: f64,
}

impl RegionHybrid {
    fn eval(&self, x: f64) -> f64 {
        if x >= self.lo && x <= self.hi {
            self.series.eval(x)
        } else {
            self.base.eval(x)
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        if x >= self.lo && x <= self.hi {
            self.series.derivative(x)
        } else {
            self.base.derivative(x)
        }
    }
}

/// The activation installed at one layer.
#[derive(Debug, Clone)]
pub enum LayerActivation {
    Exact(ScalarActivation),
    Series(HermiteSeries),
    Hybrid(RegionHybrid),
}

impl LayerActivation {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            LayerActivation::Exact(f) => f.eval(x),
            LayerActivation::Series(s) => s.eval(x),
            LayerActivation::Hybrid(h) => h.eval(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            LayerActivation::Exact(f) => f.derivative(x),
            LayerActivation::Series(s) => s.derivative(x),
            LayerActivation::Hybrid(h) => h.derivative(x),
        }
    }
}

/// One activation layer: `a = act(W x + b)`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// Row-major, `out × in`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: LayerActivation,
}

/// The linear output head: `logits = W x + b`, no activation.
#[derive(Debug, Clone)]
pub struct OutputLayer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// A dense feed-forward classifier. `layers` are the activation layers the
/// approximation pipeline profiles and substitutes (1-based layer indices in
/// reports); the output head stays linear into softmax cross-entropy.
#[derive(Debug, Clone)]
pub struct NetModel {
    pub layers: Vec<DenseLayer>,
    pub output: OutputLayer,
}

fn check_affine(weights: &[Vec<f64>], bias: &[f64], what: &str) -> Result<usize> {
    if weights.is_empty() || weights[0].is_empty() {
        return Err(Error::ModelFormat {
            reason: format!("{what}: empty weight matrix"),
        });
    }
    let in_dim = weights[0].len();
    if weights.iter().any(|row| row.len() != in_dim) {
        return Err(Error::ModelFormat {
            reason: format!("{what}: ragged weight matrix"),
        });
    }
    if bias.len() != weights.len() {
        return Err(Error::ModelFormat {
            reason: format!(
                "{what}: bias length {} does not match {} output rows",
                bias.len(),
                weights.len()
            ),
        });
    }
    Ok(in_dim)
}

impl NetModel {
    /// Validate layer dimension compatibility.
    pub fn new(layers: Vec<DenseLayer>, output: OutputLayer) -> Result<Self> {
        let model = NetModel { layers, output };
        let mut dim: Option<usize> = None;
        for (i, layer) in model.layers.iter().enumerate() {
            let in_dim = check_affine(&layer.weights, &layer.bias, &format!("layer {}", i + 1))?;
            if let Some(prev_out) = dim {
                if in_dim != prev_out {
                    return Err(Error::DimensionMismatch {
                        layer: i + 1,
                        expected: prev_out,
                        got: in_dim,
                    });
                }
            }
            dim = Some(layer.weights.len());
        }
        let head_in = check_affine(&model.output.weights, &model.output.bias, "output head")?;
        if let Some(prev_out) = dim {
            if head_in != prev_out {
                return Err(Error::DimensionMismatch {
                    layer: model.layers.len() + 1,
                    expected: prev_out,
                    got: head_in,
                });
            }
        }
        Ok(model)
    }

    pub fn n_activation_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers
            .first()
            .map(|l| l.weights[0].len())
            .unwrap_or_else(|| self.output.weights[0].len())
    }

    pub fn n_classes(&self) -> usize {
        self.output.weights.len()
    }

    /// New model with the activation of every layer replaced by the matching
    /// fitted series. Weights and biases are carried over untouched.
    pub fn substitute(&self, series: &[HermiteSeries]) -> Result<NetModel> {
        if series.len() != self.layers.len() {
            return Err(Error::LayerCountMismatch {
                expected: self.layers.len(),
                got: series.len(),
            });
        }
        let layers = self
            .layers
            .iter()
            .zip(series)
            .map(|(layer, s)| DenseLayer {
                weights: layer.weights.clone(),
                bias: layer.bias.clone(),
                activation: LayerActivation::Series(s.clone()),
            })
            .collect();
        NetModel::new(layers, self.output.clone())
    }

    /// New model with a [`RegionHybrid`] installed at one layer (0-based) and
    /// every other layer left exact.
    pub fn with_region_hybrid(
        &self,
        layer_index: usize,
        region: (f64, f64),
        series: &HermiteSeries,
    ) -> Result<NetModel> {
        let Some(target) = self.layers.get(layer_index) else {
            return Err(Error::ModelFormat {
                reason: format!(
                    "layer index {layer_index} out of range for {} layers",
                    self.layers.len()
                ),
            });
        };
        let LayerActivation::Exact(base) = &target.activation else {
            return Err(Error::ModelFormat {
                reason: "region probe requires the exact activation at the probed layer".into(),
            });
        };
        let mut layers = self.layers.clone();
        layers[layer_index].activation = LayerActivation::Hybrid(RegionHybrid {
            base: base.clone(),
            series: series.clone(),
            lo: region.0,
            hi: region.1,
        });
        NetModel::new(layers, self.output.clone())
    }
}

/// Forward-pass record: logits plus per-layer activation inputs and outputs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `z_i = W_i a_{i-1} + b_i` per activation layer (feeds stats).
    pub pre_activations: Vec<Vec<f64>>,
    /// `a_i = act_i(z_i)` per activation layer.
    pub activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

fn affine(weights: &[Vec<f64>], bias: &[f64], x: &[f64], layer: usize) -> Result<Vec<f64>> {
    let in_dim = weights[0].len();
    if x.len() != in_dim {
        return Err(Error::DimensionMismatch {
            layer,
            expected: in_dim,
            got: x.len(),
        });
    }
    Ok(weights
        .iter()
        .zip(bias)
        .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect())
}

fn ensure_finite(values: &[f64], context: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: context.to_string(),
        });
    }
    Ok(())
}

/// Run the network on one sample, recording every intermediate.
pub fn forward(model: &NetModel, features: &[f64]) -> Result<ForwardPass> {
    let mut pre_activations = Vec::with_capacity(model.layers.len());
    let mut activations = Vec::with_capacity(model.layers.len());
    let mut x = features.to_vec();
    for (i, layer) in model.layers.iter().enumerate() {
        let z = affine(&layer.weights, &layer.bias, &x, i + 1)?;
        ensure_finite(&z, &format!("pre-activations of layer {}", i + 1))?;
        let a: Vec<f64> = z.iter().map(|&v| layer.activation.eval(v)).collect();
        ensure_finite(&a, &format!("activations of layer {}", i + 1))?;
        pre_activations.push(z);
        x = a.clone();
        activations.push(a);
    }
    let logits = affine(
        &model.output.weights,
        &model.output.bias,
        &x,
        model.layers.len() + 1,
    )?;
    ensure_finite(&logits, "logits")?;
    Ok(ForwardPass {
        pre_activations,
        activations,
        logits,
    })
}

/// Numerically stable softmax cross-entropy `logsumexp(logits) − logits[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::DatasetFormat {
            reason: format!("label {label} out of range for {} classes", logits.len()),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    Ok(max + sum_exp.ln() - logits[label])
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Exact reverse-mode gradients of the softmax cross-entropy loss, together
/// with the forward record they were computed from.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub forward: ForwardPass,
    pub loss: f64,
    /// `∂L/∂a_{i,j}` — gradient w.r.t. each activation output, per layer.
    pub activation_outputs: Vec<Vec<f64>>,
    pub layer_weights: Vec<Vec<Vec<f64>>>,
    pub layer_bias: Vec<Vec<f64>>,
    pub output_weights: Vec<Vec<f64>>,
    pub output_bias: Vec<f64>,
}

/// Backpropagate one sample. Gradients w.r.t. activation outputs feed the
/// sensitivity weights; weight/bias gradients feed the toy trainer.
pub fn backward(model: &NetModel, features: &[f64], label: usize) -> Result<Gradients> {
    let pass = forward(model, features)?;
    let loss = cross_entropy(&pass.logits, label)?;

    let mut g_logits = softmax(&pass.logits);
    g_logits[label] -= 1.0;

    let n = model.layers.len();
    let last_activations = if n == 0 {
        features
    } else {
        &pass.activations[n - 1]
    };
    let output_weights: Vec<Vec<f64>> = g_logits
        .iter()
        .map(|g| last_activations.iter().map(|a| g * a).collect())
        .collect();
    let output_bias = g_logits.clone();

    // g = ∂L/∂a for the layer currently being visited.
    let mut g = mat_t_vec(&model.output.weights, &g_logits);
    let mut activation_outputs = vec![Vec::new(); n];
    let mut layer_weights = vec![Vec::new(); n];
    let mut layer_bias = vec![Vec::new(); n];

    for i in (0..n).rev() {
        ensure_finite(&g, &format!("gradients at layer {}", i + 1))?;
        activation_outputs[i] = g.clone();
        let layer = &model.layers[i];
        let delta: Vec<f64> = g
            .iter()
            .zip(&pass.pre_activations[i])
            .map(|(gv, &z)| gv * layer.activation.derivative(z))
            .collect();
        let below = if i == 0 { features } else { &pass.activations[i - 1] };
        layer_weights[i] = delta
            .iter()
            .map(|d| below.iter().map(|a| d * a).collect())
            .collect();
        layer_bias[i] = delta.clone();
        g = mat_t_vec(&layer.weights, &delta);
    }

    Ok(Gradients {
        forward: pass,
        loss,
        activation_outputs,
        layer_weights,
        layer_bias,
        output_weights,
        output_bias,
    })
}

fn mat_t_vec(weights: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let in_dim = weights[0].len();
    let mut out = vec![0.0; in_dim];
    for (row, &vi) in weights.iter().zip(v) {
        for (o, w) in out.iter_mut().zip(row) {
            *o += w * vi;
        }
    }
    out
}

/// A classification dataset: uniform-width feature rows and integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.len() != labels.len() {
            return Err(Error::DatasetFormat {
                reason: format!(
                    "{} feature rows but {} labels",
                    features.len(),
                    labels.len()
                ),
            });
        }
        let dim = features[0].len();
        if dim == 0 || features.iter().any(|f| f.len() != dim) {
            return Err(Error::DatasetFormat {
                reason: "feature rows must be non-empty and uniform width".into(),
            });
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DatasetFormat {
                reason: "features must be finite".into(),
            });
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) + 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.features
            .iter()
            .map(|f| f.as_slice())
            .zip(self.labels.iter().copied())
    }

    /// Header-free CSV, one sample per row: features then the integer label.
    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut csv_reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for record in csv_reader.records() {
            let record = record?;
            if record.len() < 2 {
                return Err(Error::DatasetFormat {
                    reason: "each row needs at least one feature and a label".into(),
                });
            }
            let mut row = Vec::with_capacity(record.len() - 1);
            for field in record.iter().take(record.len() - 1) {
                row.push(field.parse::<f64>().map_err(|_| Error::DatasetFormat {
                    reason: format!("bad feature value '{field}'"),
                })?);
            }
            let label_field = record.get(record.len() - 1).expect("length checked");
            labels.push(label_field.parse::<usize>().map_err(|_| {
                Error::DatasetFormat {
                    reason: format!("bad label '{label_field}'"),
                }
            })?);
            features.push(row);
        }
        Dataset::new(features, labels)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::ReadFile {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv_reader(file)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for (f, l) in self.iter() {
            for v in f {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{l}\n"));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|source| Error::WriteFile {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Top-1 accuracy. Argmax ties break toward the lower class index; samples
/// whose forward pass fails (non-finite intermediates from far-out-of-range
/// polynomial inputs) count as misclassified, which keeps the accuracy-driven
/// searches total.
pub fn accuracy(model: &NetModel, data: &Dataset) -> f64 {
    let mut correct = 0usize;
    for (features, label) in data.iter() {
        if let Ok(pass) = forward(model, features) {
            if argmax(&pass.logits) == label {
                correct += 1;
            }
        }
    }
    correct as f64 / data.len() as f64
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Average cross-entropy loss over the dataset. Unlike [`accuracy`] this
/// propagates forward failures: the probe experiments need the loss value
/// itself, however large.
pub fn average_loss(model: &NetModel, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for (features, label) in data.iter() {
        let pass = forward(model, features)?;
        total += cross_entropy(&pass.logits, label)?;
    }
    Ok(total / data.len() as f64)
}

/// Average loss with a region hybrid installed at one layer (0-based), all
/// other layers exact.
pub fn region_probe(
    model: &NetModel,
    layer_index: usize,
    region: (f64, f64),
    series: &HermiteSeries,
    data: &Dataset,
) -> Result<f64> {
    let probed = model.with_region_hybrid(layer_index, region, series)?;
    average_loss(&probed, data)
}

// --- model JSON format -----------------------------------------------------

#[derive(Serialize, Deserialize)]
struct LayerJson {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: String,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    layers: Vec<LayerJson>,
}

impl NetModel {
    /// Parse the weight JSON: `{"layers": [{weights, bias, activation}, ..]}`
    /// where the final entry must use `"identity"` and becomes the linear
    /// output head.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: ModelJson = serde_json::from_str(text)?;
        if raw.layers.is_empty() {
            return Err(Error::ModelFormat {
                reason: "model has no layers".into(),
            });
        }
        let mut layers = raw.layers;
        let head = layers.pop().expect("nonempty");
        if head.activation != "identity" {
            return Err(Error::ModelFormat {
                reason: format!(
                    "the final layer is the linear output head and must use activation \
                     \"identity\", got \"{}\"",
                    head.activation
                ),
            });
        }
        let dense = layers
            .into_iter()
            .map(|l| {
                Ok(DenseLayer {
                    weights: l.weights,
                    bias: l.bias,
                    activation: LayerActivation::Exact(ScalarActivation::from_name(
                        &l.activation,
                    )?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        NetModel::new(
            dense,
            OutputLayer {
                weights: head.weights,
                bias: head.bias,
            },
        )
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::ReadFile {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Serialize to the weight JSON format. Only models whose activations are
    /// the named exact kinds can be written.
    pub fn to_json_string(&self) -> Result<String> {
        let mut layers = Vec::with_capacity(self.layers.len() + 1);
        for (i, layer) in self.layers.iter().enumerate() {
            let LayerActivation::Exact(f) = &layer.activation else {
                return Err(Error::ModelFormat {
                    reason: format!("layer {}: only exact activations are serializable", i + 1),
                });
            };
            if matches!(f, ScalarActivation::Tabulated { .. }) {
                return Err(Error::ModelFormat {
                    reason: format!("layer {}: tabulated activations are not serializable", i + 1),
                });
            }
            layers.push(LayerJson {
                weights: layer.weights.clone(),
                bias: layer.bias.clone(),
                activation: f.name().to_string(),
            });
        }
        layers.push(LayerJson {
            weights: self.output.weights.clone(),
            bias: self.output.bias.clone(),
            activation: "identity".to_string(),
        });
        Ok(serde_json::to_string_pretty(&ModelJson { layers })?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = self.to_json_string()?;
        std::fs::write(path, text).map_err(|source| Error::WriteFile {
            path: path.to_path_buf(),
            source,
        })
    }
}
