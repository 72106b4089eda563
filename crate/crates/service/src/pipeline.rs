//! Offline training and evaluation behind `hieroscribe train` / `evaluate`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use hieroscribe_core::classic::{extract_features_batch, train_svm, FeatureConfig, SvmParams};
use hieroscribe_core::cnn::{train_classifier, CnnConfig, CnnTrainConfig, SoftmaxClassifierModel};
use hieroscribe_core::corpus::{
    class_frequencies, class_weights, load_dataset, make_splits, DatasetSplit, LabeledSample, SplitPart, SplitRatios,
    DEFAULT_CANONICAL_SIZE,
};
use hieroscribe_core::evaluation::{
    embedding_map, operating_curves, per_class_report, EvaluationSummary, GroupMode, ScoredPrediction, TsneConfig,
};
use hieroscribe_core::metric::{compute_centroids, train_encoder, EncoderConfig, EncoderModel, MetricTrainConfig};
use hieroscribe_core::raster::GlyphImage;
use hieroscribe_core::{Execution, GardinerCode};
use log::info;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendKind, Backends};
use crate::config::ModelPaths;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// Training configuration file; every section falls back to its defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub canonical_size: u32,
    pub split: SplitRatios,
    pub held_out_pages: BTreeSet<String>,
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub metric: MetricTrainConfig,
    pub features: FeatureConfig,
    pub svm: SvmParams,
    pub cnn: CnnConfig,
    pub cnn_train: CnnTrainConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            canonical_size: DEFAULT_CANONICAL_SIZE,
            split: SplitRatios::default(),
            held_out_pages: BTreeSet::new(),
            seed: 0,
            encoder: EncoderConfig::desk(),
            metric: MetricTrainConfig::default(),
            features: FeatureConfig::default(),
            svm: SvmParams::default(),
            cnn: CnnConfig::desk(),
            cnn_train: CnnTrainConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.metric.exec = exec;
        self.svm.exec = exec;
        self.cnn_train.exec = exec;
        self
    }
}

pub const SPLIT_FILE: &str = "split.json";

/// Loads `data`, splits it, trains the requested backends and writes the
/// models plus `split.json` into `out`.
pub fn train(data: &Path, out: &Path, backends: &[BackendKind], cfg: &TrainConfig) -> Result<ModelPaths, BoxError> {
    let report = load_dataset(data, cfg.canonical_size)?;
    if !report.skipped.is_empty() {
        log::warn!("skipped {} undecodable files", report.skipped.len());
    }
    let samples = report.samples;
    let split = make_splits(&samples, cfg.split, &cfg.held_out_pages, cfg.seed)?;
    for w in &split.warnings {
        log::warn!("{w}");
    }
    fs::create_dir_all(out)?;
    split.save(&out.join(SPLIT_FILE))?;
    let train = split.select(SplitPart::Train, &samples);
    let val = split.select(SplitPart::Validation, &samples);
    info!("{} train / {} validation samples", train.len(), val.len());
    let paths = ModelPaths::in_dir(out);
    for &b in backends {
        train_backend(b, &train, &val, cfg, &paths)?;
    }
    Ok(paths)
}

pub fn train_backend(
    backend: BackendKind,
    train: &[&LabeledSample],
    val: &[&LabeledSample],
    cfg: &TrainConfig,
    paths: &ModelPaths,
) -> Result<(), BoxError> {
    let weights = class_weights(&class_frequencies(train.iter().map(|s| &s.code)))?;
    match backend {
        BackendKind::DeepMml => {
            let mut encoder = EncoderModel::new(cfg.encoder.clone(), cfg.seed)?;
            let history = train_encoder(&mut encoder, train, val, &cfg.metric)?;
            info!(
                "encoder: best validation loss {:.4} at epoch {} (initial {:.4})",
                history.best_val_loss, history.best_epoch, history.initial_val_loss
            );
            let table = compute_centroids(&encoder, train.iter().map(|s| (&s.code, &s.image)), cfg.metric.exec)?;
            encoder.save(&paths.encoder)?;
            table.save(&paths.centroids)?;
            write_json(&history_path(paths, backend), &history)?;
        }
        BackendKind::TradMl => {
            fn images<'a>(set: &[&'a LabeledSample]) -> Vec<&'a GlyphImage> {
                set.iter().map(|s| &s.image).collect()
            }
            let codes = |set: &[&LabeledSample]| set.iter().map(|s| s.code.clone()).collect::<Vec<_>>();
            let xs = extract_features_batch(&images(train), &cfg.features, cfg.svm.exec)?;
            let vx = extract_features_batch(&images(val), &cfg.features, cfg.svm.exec)?;
            let vy = codes(val);
            let outcome = train_svm(&xs, &codes(train), &weights, Some((&vx, &vy)), &cfg.svm)?;
            info!("svm: selected C={}", outcome.model.selected_c);
            outcome.model.save(&paths.svm)?;
            write_json(&history_path(paths, backend), &outcome.sweep)?;
        }
        BackendKind::CnnEnd2end => {
            let classes: Vec<GardinerCode> = train.iter().map(|s| s.code.clone()).collect();
            let mut model = SoftmaxClassifierModel::new(cfg.cnn.clone(), classes, cfg.seed)?;
            let history = train_classifier(&mut model, train, val, &weights, &cfg.cnn_train)?;
            info!("cnn: best validation loss {:.4} at epoch {}", history.best_val_loss, history.best_epoch);
            model.save(&paths.cnn)?;
            write_json(&history_path(paths, backend), &history)?;
        }
    }
    Ok(())
}

fn history_path(paths: &ModelPaths, backend: BackendKind) -> PathBuf {
    let dir = paths.encoder.parent().unwrap_or(Path::new("."));
    dir.join(format!("{backend}_history.json"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BoxError> {
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

/// Up to 101 ascending thresholds at the quantiles of `confidences`.
pub fn quantile_thresholds(confidences: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = confidences.iter().copied().filter(|v| v.is_finite()).collect();
    c.sort_by(f64::total_cmp);
    if c.is_empty() {
        return Vec::new();
    }
    let mut out: Vec<f64> = (0..=100).map(|k| c[(k * (c.len() - 1)) / 100]).collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct BackendScore {
    pub backend: BackendKind,
    pub balanced_accuracy: f64,
    pub accuracy: f64,
}

/// Evaluates every loaded backend on `part` of the split and writes
/// `<backend>_report.json`, `<backend>_classes.csv` and, for Deep-MML with
/// `tsne` set, `embedding_map.{json,svg}` into `out`.
pub fn evaluate(
    data: &Path,
    models: &ModelPaths,
    split: &DatasetSplit,
    part: SplitPart,
    out: &Path,
    group: GroupMode,
    tsne: Option<TsneConfig>,
    canonical_size: u32,
) -> Result<Vec<BackendScore>, BoxError> {
    let samples = load_dataset(data, canonical_size)?.samples;
    let test = split.select(part, &samples);
    if test.is_empty() {
        return Err("the selected split part is empty".into());
    }
    let y_true: Vec<GardinerCode> = test.iter().map(|s| s.code.clone()).collect();
    let backends = Backends::load(models, None);
    fs::create_dir_all(out)?;
    let mut scores = Vec::new();
    for kind in BackendKind::ALL {
        if backends.status(kind).is_err() {
            continue;
        }
        let preds = test
            .iter()
            .map(|s| match backends.classify(kind, &s.image) {
                Ok(r) => r.map(|p| ScoredPrediction {
                    code: p.code,
                    confidence: p.confidence,
                }),
                Err(u) => Err(hieroscribe_core::Error::InvalidInput(u.reason.clone())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let y_pred: Vec<GardinerCode> = preds.iter().map(|p| p.code.clone()).collect();
        let report = per_class_report(&y_true, &y_pred)?;
        let conf: Vec<f64> = preds.iter().map(|p| p.confidence).collect();
        let curves = operating_curves(&preds, &y_true, &quantile_thresholds(&conf))?;
        let name = kind.to_string();
        let summary = EvaluationSummary::new(&name, &report, group, Some(&curves))?;
        summary.write_json(fs::File::create(out.join(format!("{kind}_report.json")))?)?;
        report.write_csv(fs::File::create(out.join(format!("{kind}_classes.csv")))?)?;
        info!("{kind}: balanced accuracy {:.4}", report.balanced_accuracy);
        scores.push(BackendScore {
            backend: kind,
            balanced_accuracy: report.balanced_accuracy,
            accuracy: report.accuracy,
        });
    }
    if let Some(tcfg) = tsne {
        if backends.status(BackendKind::DeepMml).is_ok() {
            let encoder = EncoderModel::load(&models.encoder)?;
            let images: Vec<_> = test.iter().map(|s| &s.image).collect();
            let emb: Vec<Vec<f64>> = encoder
                .embed_batch(&images, tcfg.exec)?
                .iter()
                .map(|e| e.to_f64())
                .collect();
            let map = embedding_map(&emb, &y_true, &tcfg)?;
            write_json(&out.join("embedding_map.json"), &map)?;
            fs::write(out.join("embedding_map.svg"), map.to_svg(800))?;
        }
    }
    if scores.is_empty() {
        return Err("no backend models could be loaded".into());
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_are_strictly_ascending() {
        let t = quantile_thresholds(&[0.5, 0.1, 0.5, 0.9, f64::NAN]);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(t.first(), Some(&0.1));
        assert_eq!(t.last(), Some(&0.9));
        assert!(quantile_thresholds(&[]).is_empty());
    }

    #[test]
    fn train_config_partial_file() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"seed": 7, "metric": {"max_epochs": 3}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.metric.max_epochs, 3);
        assert_eq!(cfg.metric.margin, 0.5);
        assert_eq!(cfg.encoder, EncoderConfig::desk());
    }
}
