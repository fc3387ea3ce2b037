//! Per-layer input statistics and loss-sensitivity weights.
//!
//! For each activation layer the profile records the mean and standard
//! deviation of all activation inputs pooled over nodes and samples, plus the
//! sensitivity weight `A_i`: the dataset average of `Σ_j (∂L/∂a_{i,j})^2`,
//! computed by exact backpropagation at the pre-trained weights with the
//! original (non-polynomial) activations. The modeled loss variance of a
//! degree assignment is then `V(d) = Σ_i A_i·E_i(d_i)`.

use crate::error::{Error, Result};
use crate::net::{backward, Dataset, NetModel};
use crate::runtime::SENTINEL_DEGREE;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-layer MSE lookup `degree -> E_i(d)`.
pub type MseTable = BTreeMap<i32, f64>;

/// Statistics of one activation layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    /// 1-based layer index.
    #[serde(rename = "layer")]
    pub layer_index: usize,
    pub mu: f64,
    pub sigma: f64,
    #[serde(rename = "A")]
    pub a_weight: f64,
    pub n_nodes: usize,
}

/// Statistics for every activation layer of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityProfile {
    pub layers: Vec<LayerStats>,
    /// Number of samples the averages were taken over. Not part of the
    /// serialized format.
    pub n_train: usize,
}

impl SensitivityProfile {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Serialized as a JSON array of per-layer records.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.layers).expect("profile serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let layers: Vec<LayerStats> = serde_json::from_str(text)?;
        for (i, l) in layers.iter().enumerate() {
            if l.layer_index != i + 1 {
                return Err(Error::ProfileFormat {
                    reason: format!(
                        "sensitivity profile layer indices must be contiguous from 1; \
                         entry {} has layer {}",
                        i, l.layer_index
                    ),
                });
            }
        }
        Ok(SensitivityProfile { layers, n_train: 0 })
    }

    pub fn a_weights(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.a_weight).collect()
    }
}

/// Streaming mean/variance accumulator (Welford). Merging two accumulators
/// is associative, so per-sample work may be partitioned freely.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2 + delta * delta * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance (divide by count): the fitted density describes
    /// the observed inputs themselves, not an unseen population.
    pub fn population_variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }
}

/// Collect per-layer input statistics and sensitivity weights over a dataset.
///
/// Errors on models without activation layers, on layers whose inputs have
/// zero variance, and on non-finite statistics or gradients.
pub fn collect_stats(model: &NetModel, data: &Dataset) -> Result<SensitivityProfile> {
    let n_layers = model.n_activation_layers();
    if n_layers == 0 {
        return Err(Error::ModelFormat {
            reason: "model has no activation layers to profile".into(),
        });
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut moments = vec![RunningMoments::default(); n_layers];
    let mut alpha_sums = vec![0.0f64; n_layers];

    for (features, label) in data.iter() {
        let grads = backward(model, features, label)?;
        for (layer, moment) in moments.iter_mut().enumerate() {
            // Statistics pool the activation *inputs* (pre-activations).
            for &z in &grads.forward.pre_activations[layer] {
                moment.push(z);
            }
            let alpha: f64 = grads.activation_outputs[layer].iter().map(|g| g * g).sum();
            if !alpha.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("sensitivity of layer {}", layer + 1),
                });
            }
            alpha_sums[layer] += alpha;
        }
    }

    let n_train = data.len();
    let mut layers = Vec::with_capacity(n_layers);
    for (idx, moment) in moments.iter().enumerate() {
        let variance = moment.population_variance();
        if variance <= 0.0 {
            return Err(Error::DegenerateLayer { layer: idx + 1 });
        }
        let stats = LayerStats {
            layer_index: idx + 1,
            mu: moment.mean(),
            sigma: variance.sqrt(),
            a_weight: alpha_sums[idx] / n_train as f64,
            n_nodes: model.layers[idx].weights.len(),
        };
        if !stats.mu.is_finite() || !stats.sigma.is_finite() || !stats.a_weight.is_finite() {
            return Err(Error::NonFinite {
                context: format!("statistics of layer {}", idx + 1),
            });
        }
        layers.push(stats);
    }
    Ok(SensitivityProfile { layers, n_train })
}

/// Modeled average loss variance `V(d) = Σ_i A_i·E_i(d_i)`.
///
/// Any sentinel degree makes the whole sum infinite: a skipped layer is not
/// evaluable. Missing table entries are lookup errors.
pub fn loss_variance(
    profile: &SensitivityProfile,
    mse_tables: &[MseTable],
    degrees: &[i32],
) -> Result<f64> {
    let n = profile.n_layers();
    if mse_tables.len() != n || degrees.len() != n {
        return Err(Error::DegreeVectorLength {
            expected: n,
            got: mse_tables.len().min(degrees.len()),
        });
    }
    let mut total = 0.0f64;
    let mut any_sentinel = false;
    for (layer, (&d, table)) in degrees.iter().zip(mse_tables).enumerate() {
        if d == SENTINEL_DEGREE {
            any_sentinel = true;
            continue;
        }
        let e = table.get(&d).copied().ok_or(Error::DegreeNotInTable {
            layer: layer + 1,
            degree: d,
        })?;
        total += profile.layers[layer].a_weight * e;
    }
    Ok(if any_sentinel { f64::INFINITY } else { total })
}
