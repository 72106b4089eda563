//! End-to-end softmax CNN trained with class-weighted cross-entropy.

use std::borrow::Borrow;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::code::GardinerCode;
use crate::corpus::{ClassWeightTable, LabeledSample};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nn::{run_training, sum_in_order, Adam, DenseSpec, LoopConfig, Network, NetworkSpec, TrainingHistory};
use crate::raster::{self, GlyphImage};

pub const CNN_FORMAT_VERSION: u32 = 1;
pub const PROBABILITY_FLOOR: f64 = 1e-12;

const CHUNK: usize = 8;

/// `−(1/N) Σᵢ Σ_c w_c · y_ic · ln(max(p_ic, ε))` over row-major `N × C` matrices.
pub fn weighted_cross_entropy(probs: &[Vec<f64>], one_hot: &[Vec<f64>], weights: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidInput("no rows".into()));
    }
    if probs.len() != one_hot.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            actual: one_hot.len(),
        });
    }
    let mut total = 0.0;
    for (p, y) in probs.iter().zip(one_hot) {
        for row in [p, y] {
            if row.len() != weights.len() {
                return Err(Error::DimensionMismatch {
                    expected: weights.len(),
                    actual: row.len(),
                });
            }
        }
        for ((pc, yc), wc) in p.iter().zip(y).zip(weights) {
            if *yc != 0.0 {
                total -= wc * yc * pc.max(PROBABILITY_FLOOR).ln();
            }
        }
    }
    Ok(total / probs.len() as f64)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Loss `−w · ln(max(p_label, ε))` of one sample and its gradient with
/// respect to the logits.
pub fn weighted_cce_logits(logits: &[f64], label: usize, weight: f64) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let loss = -weight * p[label].max(PROBABILITY_FLOOR).ln();
    let grad = if p[label] < PROBABILITY_FLOOR {
        vec![0.0; p.len()]
    } else {
        p.iter()
            .enumerate()
            .map(|(k, &pk)| weight * (pk - if k == label { 1.0 } else { 0.0 }))
            .collect()
    };
    (loss, grad)
}

/// Weight of each class in `classes` order; absent classes get 1.
pub fn weight_vector(table: &ClassWeightTable, classes: &[GardinerCode]) -> Vec<f64> {
    classes.iter().map(|c| table.get_or_one(c)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub input_size: usize,
    pub conv_channels: Vec<usize>,
    pub hidden: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            conv_channels: vec![16, 32, 64, 64],
            hidden: 512,
        }
    }
}

impl CnnConfig {
    pub fn desk() -> Self {
        Self {
            input_size: 40,
            conv_channels: vec![8, 16, 32],
            hidden: 512,
        }
    }

    fn network_spec(&self, classes: usize) -> NetworkSpec {
        NetworkSpec {
            input_size: self.input_size,
            conv_channels: self.conv_channels.clone(),
            dense: vec![
                DenseSpec {
                    out: self.hidden,
                    relu: true,
                },
                DenseSpec {
                    out: classes,
                    relu: false,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnTrainConfig {
    pub learning_rate: f32,
    pub lr_patience: usize,
    pub lr_factor: f32,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for CnnTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            lr_patience: 3,
            lr_factor: 0.5,
            patience: 5,
            max_epochs: 50,
            batch_size: 32,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SoftmaxClassifierModel {
    version: u32,
    classes: Vec<GardinerCode>,
    config: CnnConfig,
    train_config: Option<CnnTrainConfig>,
    network: Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierPrediction {
    pub code: GardinerCode,
    pub confidence: f64,
    /// Softmax distribution in [`SoftmaxClassifierModel::classes`] order.
    pub distribution: Vec<f64>,
}

impl SoftmaxClassifierModel {
    /// `classes` is sorted and deduplicated.
    pub fn new(config: CnnConfig, mut classes: Vec<GardinerCode>, seed: u64) -> Result<Self> {
        classes.sort();
        classes.dedup();
        if classes.is_empty() {
            return Err(Error::InvalidInput("classifier needs at least one class".into()));
        }
        let network = Network::new(config.network_spec(classes.len()), seed)?;
        Ok(Self {
            version: CNN_FORMAT_VERSION,
            classes,
            config,
            train_config: None,
            network,
        })
    }

    pub fn classes(&self) -> &[GardinerCode] {
        &self.classes
    }

    pub fn config(&self) -> &CnnConfig {
        &self.config
    }

    pub fn input_size(&self) -> u32 {
        self.config.input_size as u32
    }

    pub fn fingerprint(&self) -> String {
        self.network.fingerprint()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if model.version != CNN_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: model.version,
                expected: CNN_FORMAT_VERSION,
            });
        }
        if model.network.spec() != &model.config.network_spec(model.classes.len()) {
            return Err(Error::ModelMismatch("classifier network does not match its class list".into()));
        }
        Ok(model)
    }

    fn distribution(&self, input: &[f32]) -> Result<Vec<f64>> {
        let logits: Vec<f64> = self.network.forward(input)?.iter().map(|&z| f64::from(z)).collect();
        Ok(softmax(&logits))
    }

    fn decide(&self, distribution: Vec<f64>) -> Result<ClassifierPrediction> {
        let (idx, &confidence) = distribution
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| match a.total_cmp(b) {
                Ordering::Equal => self.classes[*j].cmp(&self.classes[*i]),
                o => o,
            })
            .ok_or_else(|| Error::InvalidInput("classifier has an empty class list".into()))?;
        Ok(ClassifierPrediction {
            code: self.classes[idx].clone(),
            confidence,
            distribution,
        })
    }
}

/// Predicts an image already at the model's input size.
pub fn predict_classifier(model: &SoftmaxClassifierModel, image: &GlyphImage) -> Result<ClassifierPrediction> {
    let s = model.input_size();
    if image.dimensions() != (s, s) {
        return Err(Error::ImageSize {
            expected_w: s,
            expected_h: s,
            actual_w: image.width(),
            actual_h: image.height(),
        });
    }
    model.decide(model.distribution(&raster::ink_values(image))?)
}

/// Resizes to the model's input size, then predicts.
pub fn predict_any(model: &SoftmaxClassifierModel, image: &GlyphImage) -> Result<ClassifierPrediction> {
    predict_classifier(model, &raster::to_canonical(image, model.input_size()))
}

struct Prepared {
    inputs: Vec<Vec<f32>>,
    labels: Vec<usize>,
}

fn prepare<S: Borrow<LabeledSample> + Sync>(model: &SoftmaxClassifierModel, data: &[S], exec: Execution) -> Result<Prepared> {
    let index: BTreeMap<&GardinerCode, usize> = model.classes.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let labels = data
        .iter()
        .map(|s| {
            let code = &s.borrow().code;
            index
                .get(code)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("label {code} is not in the model's class list")))
        })
        .collect::<Result<_>>()?;
    let size = model.input_size();
    let inputs = exec.map(data, |s| raster::ink_values(&raster::to_canonical(&s.borrow().image, size)));
    Ok(Prepared { inputs, labels })
}

fn mean_loss(net: &Network, data: &Prepared, weights: &[f64], exec: Execution) -> Result<f64> {
    let idx: Vec<usize> = (0..data.labels.len()).collect();
    let losses = exec.map(&idx, |&i| -> Result<f64> {
        let logits: Vec<f64> = net.forward(&data.inputs[i])?.iter().map(|&z| f64::from(z)).collect();
        let label = data.labels[i];
        Ok(weighted_cce_logits(&logits, label, weights[label]).0)
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / idx.len() as f64)
}

fn batch_gradient(net: &Network, data: &Prepared, batch: &[usize], weights: &[f64], exec: Execution) -> Result<(f64, Vec<f32>)> {
    let n = net.num_params();
    let scale = 1.0 / batch.len() as f64;
    let chunks: Vec<&[usize]> = batch.chunks(CHUNK).collect();
    let parts = exec.map(&chunks, |chunk| -> Result<(f64, Vec<f32>)> {
        let mut grads = vec![0f32; n];
        let mut loss = 0.0;
        for &i in *chunk {
            let (out, cache) = net.forward_train(&data.inputs[i])?;
            let logits: Vec<f64> = out.iter().map(|&z| f64::from(z)).collect();
            let label = data.labels[i];
            let (l, g) = weighted_cce_logits(&logits, label, weights[label]);
            loss += l;
            let g: Vec<f32> = g.iter().map(|v| (v * scale) as f32).collect();
            net.backward(&cache, &g, &mut grads);
        }
        Ok((loss, grads))
    });
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(parts.len());
    for part in parts {
        let (l, g) = part?;
        total += l;
        grads.push(g);
    }
    Ok((total * scale, sum_in_order(grads, n)))
}

/// Trains `model` in place with mini-batch Adam on the weighted loss and
/// early stopping on the weighted validation loss.
pub fn train_classifier<S: Borrow<LabeledSample> + Sync>(
    model: &mut SoftmaxClassifierModel,
    train: &[S],
    validation: &[S],
    weights: &ClassWeightTable,
    config: &CnnTrainConfig,
) -> Result<TrainingHistory> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let exec = config.exec;
    let train_data = prepare(model, train, exec)?;
    let val_data = if validation.is_empty() {
        log::warn!("no validation samples; early stopping on the training loss");
        prepare(model, train, exec)?
    } else {
        prepare(model, validation, exec)?
    };
    let w = weight_vector(weights, &model.classes);
    let loop_cfg = LoopConfig {
        learning_rate: config.learning_rate,
        lr_patience: config.lr_patience,
        lr_factor: config.lr_factor,
        patience: config.patience,
        max_epochs: config.max_epochs,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_data.labels.len()).collect();
    let train_epoch = |net: &mut Network, adam: &mut Adam, _epoch: usize| -> Result<f64> {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = batch_gradient(net, &train_data, batch, &w, exec)?;
            adam.step(net.params_mut(), &grads);
            total += loss;
            batches += 1;
        }
        Ok(total / batches as f64)
    };
    let validate = |net: &Network| mean_loss(net, &val_data, &w, exec);
    let history = run_training(&mut model.network, &loop_cfg, train_epoch, validate)?;
    model.train_config = Some(config.clone());
    Ok(history)
}
