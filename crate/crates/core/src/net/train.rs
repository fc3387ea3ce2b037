//! Synthetic classification tasks and a small deterministic SGD trainer,
//! so the repository is self-contained end to end.

use super::{backward, DenseLayer, Dataset, LayerActivation, NetModel, OutputLayer};
use crate::activation::ScalarActivation;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Synthetic task family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Gaussian blobs on a circle, optionally with a scaled-outlier fraction
    /// that puts feature mass several standard deviations into the tails.
    Blobs,
    /// Two-dimensional interleaved spirals.
    Spiral,
}

/// Parameters of the synthetic data generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub n_classes: usize,
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub noise: f64,
    /// Fraction of samples scaled by `outlier_scale` away from the origin.
    pub outlier_frac: f64,
    pub outlier_scale: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            kind: TaskKind::Blobs,
            n_classes: 4,
            dim: 2,
            n_train: 512,
            n_test: 256,
            noise: 0.55,
            outlier_frac: 0.04,
            outlier_scale: 4.0,
        }
    }
}

/// Deterministically generate `(train, test)` datasets.
pub fn generate_task(spec: &TaskSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    if spec.n_classes < 2 || spec.dim < 2 || spec.n_train == 0 || spec.n_test == 0 {
        return Err(Error::DatasetFormat {
            reason: "task needs >= 2 classes, >= 2 dims, and non-empty splits".into(),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let train = generate_split(spec, spec.n_train, &mut rng)?;
    let test = generate_split(spec, spec.n_test, &mut rng)?;
    Ok((train, test))
}

fn generate_split(spec: &TaskSpec, n: usize, rng: &mut ChaCha12Rng) -> Result<Dataset> {
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let normal = StandardNormal;
    for i in 0..n {
        let class = i % spec.n_classes;
        let mut x = vec![0.0f64; spec.dim];
        match spec.kind {
            TaskKind::Blobs => {
                let angle = std::f64::consts::TAU * class as f64 / spec.n_classes as f64;
                x[0] = 2.2 * angle.cos();
                x[1] = 2.2 * angle.sin();
                for v in x.iter_mut() {
                    let n: f64 = normal.sample(rng);
                    *v += spec.noise * n;
                }
            }
            TaskKind::Spiral => {
                let t: f64 = rng.random::<f64>();
                let radius = 0.4 + 2.0 * t;
                let angle = std::f64::consts::TAU * (1.25 * t + class as f64 / spec.n_classes as f64);
                x[0] = radius * angle.cos();
                x[1] = radius * angle.sin();
                for v in x.iter_mut() {
                    let n: f64 = normal.sample(rng);
                    *v += 0.35 * spec.noise * n;
                }
            }
        }
        if spec.outlier_frac > 0.0 && rng.random::<f64>() < spec.outlier_frac {
            for v in x.iter_mut() {
                *v *= spec.outlier_scale;
            }
        }
        features.push(x);
        labels.push(class);
    }
    Dataset::new(features, labels)
}

/// Trainer hyperparameters. Fixed defaults are tuned for the bundled tasks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub activation: String,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![24, 16, 12],
            activation: "relu".to_string(),
            learning_rate: 0.05,
            epochs: 80,
            batch_size: 32,
        }
    }
}

/// Train a fresh dense model with plain minibatch SGD. Fully deterministic
/// for a fixed config, dataset, and seed.
pub fn train_model(cfg: &TrainConfig, data: &Dataset, seed: u64) -> Result<NetModel> {
    let activation = ScalarActivation::from_name(&cfg.activation)?;
    if cfg.hidden.is_empty() {
        return Err(Error::ModelFormat {
            reason: "trainer needs at least one hidden layer".into(),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x7261_696e);
    let mut model = init_model(cfg, data, &activation, &mut rng)?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let features: Vec<&[f64]> = data.iter().map(|(f, _)| f).collect();
    let labels: Vec<usize> = data.iter().map(|(_, l)| l).collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut sums: Option<super::Gradients> = None;
            for &idx in batch {
                let grads = backward(&model, features[idx], labels[idx])?;
                sums = Some(match sums {
                    None => grads,
                    Some(mut acc) => {
                        accumulate(&mut acc, &grads);
                        acc
                    }
                });
            }
            let grads = sums.expect("batches are non-empty");
            apply_sgd_step(&mut model, &grads, cfg.learning_rate / batch.len() as f64);
        }
    }
    Ok(model)
}

fn init_model(
    cfg: &TrainConfig,
    data: &Dataset,
    activation: &ScalarActivation,
    rng: &mut ChaCha12Rng,
) -> Result<NetModel> {
    let normal = StandardNormal;
    let mut dims = vec![data.dim()];
    dims.extend_from_slice(&cfg.hidden);
    let n_classes = data.n_classes();

    let mut init_affine = |out: usize, inp: usize| -> (Vec<Vec<f64>>, Vec<f64>) {
        let scale = (2.0 / inp as f64).sqrt();
        let weights = (0..out)
            .map(|_| {
                (0..inp)
                    .map(|_| {
                        let n: f64 = normal.sample(rng);
                        scale * n
                    })
                    .collect()
            })
            .collect();
        (weights, vec![0.0; out])
    };

    let mut layers = Vec::with_capacity(cfg.hidden.len());
    for w in dims.windows(2) {
        let (weights, bias) = init_affine(w[1], w[0]);
        layers.push(DenseLayer {
            weights,
            bias,
            activation: LayerActivation::Exact(activation.clone()),
        });
    }
    let (weights, bias) = init_affine(n_classes, *dims.last().expect("nonempty"));
    NetModel::new(layers, OutputLayer { weights, bias })
}

fn accumulate(acc: &mut super::Gradients, g: &super::Gradients) {
    for (a, b) in acc.layer_weights.iter_mut().zip(&g.layer_weights) {
        for (ar, br) in a.iter_mut().zip(b) {
            for (av, bv) in ar.iter_mut().zip(br) {
                *av += bv;
            }
        }
    }
    for (a, b) in acc.layer_bias.iter_mut().zip(&g.layer_bias) {
        for (av, bv) in a.iter_mut().zip(b) {
            *av += bv;
        }
    }
    for (ar, br) in acc.output_weights.iter_mut().zip(&g.output_weights) {
        for (av, bv) in ar.iter_mut().zip(br) {
            *av += bv;
        }
    }
    for (av, bv) in acc.output_bias.iter_mut().zip(&g.output_bias) {
        *av += bv;
    }
}

fn apply_sgd_step(model: &mut NetModel, grads: &super::Gradients, step: f64) {
    for (layer, (gw, gb)) in model
        .layers
        .iter_mut()
        .zip(grads.layer_weights.iter().zip(&grads.layer_bias))
    {
        for (row, grow) in layer.weights.iter_mut().zip(gw) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= step * g;
            }
        }
        for (b, g) in layer.bias.iter_mut().zip(gb) {
            *b -= step * g;
        }
    }
    for (row, grow) in model.output.weights.iter_mut().zip(&grads.output_weights) {
        for (w, g) in row.iter_mut().zip(grow) {
            *w -= step * g;
        }
    }
    for (b, g) in model.output.bias.iter_mut().zip(&grads.output_bias) {
        *b -= step * g;
    }
}
