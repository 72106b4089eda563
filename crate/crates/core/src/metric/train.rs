//! Siamese training of the encoder with the cosine contrastive loss.

use std::borrow::Borrow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::MetricTrainConfig;
use super::encoder::{Embedding, EncoderModel};
use super::loss::{contrastive_loss, cosine_contrastive};
use super::pairs::{sample_pairs, PairSample};
use crate::corpus::LabeledSample;
use crate::error::{Error, Result};
use crate::nn::{run_training, sum_in_order, LoopConfig, Network, TrainingHistory};
use crate::raster;

/// Pairs per gradient-accumulation chunk. Fixed so results do not depend on
/// the thread count.
const CHUNK: usize = 8;

/// Seed offset of the validation pair draw.
const VALIDATION_STREAM: u64 = 0x5eed_0f_7a11;

fn resized(samples: &[impl Borrow<LabeledSample>], size: u32) -> Vec<LabeledSample> {
    samples
        .iter()
        .map(|s| {
            let s = s.borrow();
            LabeledSample {
                image: raster::to_canonical(&s.image, size),
                ..s.clone()
            }
        })
        .collect()
}

/// Mean loss of `pairs` and its gradient with respect to the network weights.
fn batch_gradient(
    net: &Network,
    pairs: &[PairSample],
    cfg: &MetricTrainConfig,
) -> Result<(f64, Vec<f32>)> {
    let n = net.num_params();
    let scale = 1.0 / pairs.len() as f64;
    let chunks: Vec<&[PairSample]> = pairs.chunks(CHUNK).collect();
    let parts = cfg.exec.map(&chunks, |chunk| -> Result<(f64, Vec<f32>)> {
        let mut grads = vec![0f32; n];
        let mut loss = 0.0;
        for p in *chunk {
            let (ua, ca) = net.forward_train(&raster::ink_values(&p.image_a))?;
            let (ub, cb) = net.forward_train(&raster::ink_values(&p.image_b))?;
            let u: Vec<f64> = ua.iter().map(|&x| f64::from(x)).collect();
            let v: Vec<f64> = ub.iter().map(|&x| f64::from(x)).collect();
            let (l, _, du, dv) = cosine_contrastive(&u, &v, p.label, cfg.margin);
            loss += l;
            let du: Vec<f32> = du.iter().map(|g| (g * scale) as f32).collect();
            let dv: Vec<f32> = dv.iter().map(|g| (g * scale) as f32).collect();
            net.backward(&ca, &du, &mut grads);
            net.backward(&cb, &dv, &mut grads);
        }
        Ok((loss, grads))
    });
    let mut total_loss = 0.0;
    let mut grads = Vec::with_capacity(parts.len());
    for part in parts {
        let (l, g) = part?;
        total_loss += l;
        grads.push(g);
    }
    Ok((total_loss * scale, sum_in_order(grads, n)))
}

/// Mean contrastive loss over fixed pairs, using normalized embeddings.
pub fn pair_loss(encoder: &EncoderModel, pairs: &[PairSample], margin: f64, cfg: &MetricTrainConfig) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no pairs to evaluate".into()));
    }
    let losses = cfg.exec.map(pairs, |p| -> Result<f64> {
        let a = encoder.embed_any(&p.image_a)?;
        let b = encoder.embed_any(&p.image_b)?;
        Ok(contrastive_loss(similarity(&a, &b), p.label, margin))
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / pairs.len() as f64)
}

pub fn similarity(a: &Embedding, b: &Embedding) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Trains `encoder` in place and returns the epoch history.
///
/// Pairs are resampled (and augmented) every batch. The validation loss is
/// measured on one fixed draw of un-augmented pairs from `validation`, or
/// from `train` when `validation` cannot form both pair kinds.
pub fn train_encoder<S: Borrow<LabeledSample>>(
    encoder: &mut EncoderModel,
    train: &[S],
    validation: &[S],
    cfg: &MetricTrainConfig,
) -> Result<TrainingHistory> {
    cfg.validate()?;
    if cfg.batch_size == 0 || cfg.pairs_per_epoch == 0 || cfg.validation_pairs == 0 {
        return Err(Error::Config("batch size, pairs per epoch and validation pairs must be positive".into()));
    }
    let size = encoder.input_size();
    let train = resized(train, size);
    let validation = resized(validation, size);

    let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ VALIDATION_STREAM);
    let val_pairs = match sample_pairs(&validation, cfg.validation_pairs, cfg.positive_fraction, None, &mut val_rng) {
        Ok(p) => p,
        Err(_) => {
            log::warn!("validation split cannot form pairs; validating on training pairs");
            sample_pairs(&train, cfg.validation_pairs, cfg.positive_fraction, None, &mut val_rng)?
        }
    };

    let loop_cfg = LoopConfig {
        learning_rate: cfg.learning_rate,
        lr_patience: cfg.lr_patience,
        lr_factor: cfg.lr_factor,
        patience: cfg.patience,
        max_epochs: cfg.max_epochs,
    };
    let batches = cfg.pairs_per_epoch.div_ceil(cfg.batch_size);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let config = encoder.config().clone();

    let mut train_epoch = |net: &mut Network, adam: &mut crate::nn::Adam, _epoch: usize| -> Result<f64> {
        let mut total = 0.0;
        for _ in 0..batches {
            let pairs = sample_pairs(&train, cfg.batch_size, cfg.positive_fraction, Some(cfg), &mut rng)?;
            let (loss, grads) = batch_gradient(net, &pairs, cfg)?;
            adam.step(net.params_mut(), &grads);
            total += loss;
        }
        Ok(total / batches as f64)
    };
    let validate = |net: &Network| -> Result<f64> {
        let probe = EncoderModel::from_parts(config.clone(), net.clone())?;
        pair_loss(&probe, &val_pairs, cfg.margin, cfg)
    };
    run_training(encoder.network_mut(), &loop_cfg, &mut train_epoch, validate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::GardinerCode;
    use crate::metric::encoder::EncoderConfig;
    use crate::metric::loss::SIMILAR;
    use image::{GrayImage, Luma};
    use rand::Rng;

    fn sample(code: &str, i: usize, img: GrayImage) -> LabeledSample {
        LabeledSample {
            image: img,
            code: code.parse::<GardinerCode>().unwrap(),
            page_id: None,
            sample_id: format!("{code}/{i}"),
        }
    }

    fn bar(vertical: bool, rng: &mut ChaCha8Rng) -> GrayImage {
        let o = rng.random_range(5..11);
        GrayImage::from_fn(16, 16, |x, y| {
            let (a, b) = if vertical { (x, y) } else { (y, x) };
            Luma([if (o..o + 3).contains(&a) && (2..14).contains(&b) { 0 } else { 255 }])
        })
    }

    fn toy() -> Vec<LabeledSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..12)
            .map(|i| {
                let v = i % 2 == 0;
                sample(if v { "Z1" } else { "N35" }, i, bar(v, &mut rng))
            })
            .collect()
    }

    fn small_cfg() -> MetricTrainConfig {
        MetricTrainConfig {
            augment_probability: 0.0,
            pairs_per_epoch: 64,
            batch_size: 16,
            validation_pairs: 32,
            max_epochs: 3,
            learning_rate: 3e-3,
            ..MetricTrainConfig::default()
        }
    }

    fn encoder() -> EncoderModel {
        EncoderModel::new(
            EncoderConfig {
                input_size: 16,
                conv_channels: vec![4],
                embedding_dim: 16,
            },
            2,
        )
        .unwrap()
    }

    #[test]
    fn training_lowers_validation_loss() {
        let data = toy();
        let mut enc = encoder();
        let hist = train_encoder(&mut enc, &data, &data, &small_cfg()).unwrap();
        assert!(hist.best_val_loss < hist.initial_val_loss);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let data = toy();
        let mut a = encoder();
        let mut b = encoder();
        let mut cfg = small_cfg();
        cfg.exec = crate::exec::Execution::Sequential;
        train_encoder(&mut a, &data, &data, &cfg).unwrap();
        cfg.exec = crate::exec::Execution::Parallel;
        train_encoder(&mut b, &data, &data, &cfg).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn identical_pair_has_zero_loss() {
        let data = toy();
        let enc = encoder();
        let img = raster::to_canonical(&data[0].image, 16);
        let p = PairSample {
            image_a: img.clone(),
            image_b: img,
            label: SIMILAR,
            source: (0, 0),
        };
        let l = pair_loss(&enc, &[p], 0.5, &MetricTrainConfig::default()).unwrap();
        assert!(l < 1e-9);
    }
}
