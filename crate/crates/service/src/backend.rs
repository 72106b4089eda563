//! Classifier backends, loaded once at startup and read-only afterwards.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hieroscribe_core::classic::{extract_features, predict_svm, LinearClassifierModel};
use hieroscribe_core::cnn::{predict_any, SoftmaxClassifierModel};
use hieroscribe_core::metric::{classify_with_floor, CentroidTable, EncoderModel};
use hieroscribe_core::raster::{self, GlyphImage};
use hieroscribe_core::GardinerCode;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::ModelPaths;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    DeepMml,
    TradMl,
    CnnEnd2end,
}

impl BackendKind {
    pub const ALL: [BackendKind; 3] = [Self::DeepMml, Self::TradMl, Self::CnnEnd2end];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::DeepMml => "deep_mml",
            Self::TradMl => "trad_ml",
            Self::CnnEnd2end => "cnn_end2end",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| format!("unknown backend {s:?}; expected one of deep_mml, trad_ml, cnn_end2end"))
    }
}

/// One glyph's classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphPrediction {
    pub code: GardinerCode,
    /// Cosine similarity, SVM margin or softmax probability depending on the backend.
    pub confidence: f64,
    pub runner_up: Option<(GardinerCode, f64)>,
    #[serde(default)]
    pub unknown: bool,
}

/// Why a backend cannot be used.
#[derive(Debug, Clone)]
pub struct Unavailable {
    pub backend: BackendKind,
    /// The model file that is missing or failed to load.
    pub model_file: PathBuf,
    pub reason: String,
}

pub struct MetricBackend {
    pub encoder: EncoderModel,
    pub centroids: CentroidTable,
    pub floor: Option<f64>,
}

enum Slot<T> {
    Ready(T),
    Missing(Unavailable),
}

pub struct Backends {
    metric: Slot<MetricBackend>,
    svm: Slot<LinearClassifierModel>,
    cnn: Slot<SoftmaxClassifierModel>,
}

fn missing(backend: BackendKind, path: &Path, reason: impl fmt::Display) -> Unavailable {
    let u = Unavailable {
        backend,
        model_file: path.to_path_buf(),
        reason: reason.to_string(),
    };
    warn!("backend {backend} unavailable: {} ({})", path.display(), u.reason);
    u
}

fn load_metric(paths: &ModelPaths, floor: Option<f64>) -> Slot<MetricBackend> {
    let b = BackendKind::DeepMml;
    let encoder = match EncoderModel::load(&paths.encoder) {
        Ok(e) => e,
        Err(e) => return Slot::Missing(missing(b, &paths.encoder, e)),
    };
    match CentroidTable::load(&paths.centroids, Some(&encoder)) {
        Ok(centroids) => {
            info!("deep_mml ready: {} classes", centroids.len());
            Slot::Ready(MetricBackend {
                encoder,
                centroids,
                floor,
            })
        }
        Err(e) => Slot::Missing(missing(b, &paths.centroids, e)),
    }
}

impl Backends {
    pub fn load(paths: &ModelPaths, similarity_floor: Option<f64>) -> Self {
        let svm = match LinearClassifierModel::load(&paths.svm, None) {
            Ok(m) => Slot::Ready(m),
            Err(e) => Slot::Missing(missing(BackendKind::TradMl, &paths.svm, e)),
        };
        let cnn = match SoftmaxClassifierModel::load(&paths.cnn) {
            Ok(m) => Slot::Ready(m),
            Err(e) => Slot::Missing(missing(BackendKind::CnnEnd2end, &paths.cnn, e)),
        };
        Self {
            metric: load_metric(paths, similarity_floor),
            svm,
            cnn,
        }
    }

    /// Backends built in memory; `None` entries report `paths` as missing.
    pub fn from_models(
        metric: Option<MetricBackend>,
        svm: Option<LinearClassifierModel>,
        cnn: Option<SoftmaxClassifierModel>,
        paths: &ModelPaths,
    ) -> Self {
        Self {
            metric: slot(metric, BackendKind::DeepMml, &paths.encoder),
            svm: slot(svm, BackendKind::TradMl, &paths.svm),
            cnn: slot(cnn, BackendKind::CnnEnd2end, &paths.cnn),
        }
    }

    pub fn status(&self, kind: BackendKind) -> Result<(), &Unavailable> {
        let m = match kind {
            BackendKind::DeepMml => slot_err(&self.metric),
            BackendKind::TradMl => slot_err(&self.svm),
            BackendKind::CnnEnd2end => slot_err(&self.cnn),
        };
        m.map_or(Ok(()), Err)
    }

    pub fn classify(&self, kind: BackendKind, image: &GlyphImage) -> Result<Result<GlyphPrediction, hieroscribe_core::Error>, &Unavailable> {
        Ok(match kind {
            BackendKind::DeepMml => classify_metric(ready(&self.metric)?, image),
            BackendKind::TradMl => classify_svm(ready(&self.svm)?, image),
            BackendKind::CnnEnd2end => classify_cnn(ready(&self.cnn)?, image),
        })
    }
}

fn slot<T>(m: Option<T>, backend: BackendKind, path: &Path) -> Slot<T> {
    match m {
        Some(m) => Slot::Ready(m),
        None => Slot::Missing(Unavailable {
            backend,
            model_file: path.to_path_buf(),
            reason: "not loaded".into(),
        }),
    }
}

fn slot_err<T>(s: &Slot<T>) -> Option<&Unavailable> {
    match s {
        Slot::Ready(_) => None,
        Slot::Missing(u) => Some(u),
    }
}

fn ready<T>(s: &Slot<T>) -> Result<&T, &Unavailable> {
    match s {
        Slot::Ready(t) => Ok(t),
        Slot::Missing(u) => Err(u),
    }
}

fn classify_metric(m: &MetricBackend, image: &GlyphImage) -> hieroscribe_core::Result<GlyphPrediction> {
    let emb = m.encoder.embed_any(image)?;
    let p = classify_with_floor(&emb, &m.centroids, m.floor)?;
    Ok(GlyphPrediction {
        code: p.code,
        confidence: p.similarity,
        runner_up: p.runner_up,
        unknown: p.unknown,
    })
}

fn runner_up(classes: &[GardinerCode], scores: &[f64], winner: &GardinerCode) -> Option<(GardinerCode, f64)> {
    classes
        .iter()
        .zip(scores)
        .filter(|(c, _)| *c != winner)
        .max_by(|(ca, a), (cb, b)| a.total_cmp(b).then_with(|| cb.cmp(ca)))
        .map(|(c, s)| (c.clone(), *s))
}

fn classify_svm(model: &LinearClassifierModel, image: &GlyphImage) -> hieroscribe_core::Result<GlyphPrediction> {
    let (w, h) = model.layout.image_size;
    let resized;
    let input = if image.dimensions() == (w, h) {
        image
    } else {
        resized = raster::to_canonical(image, w.max(h));
        &resized
    };
    let features = extract_features(input, &model.layout.config)?;
    let (code, margin) = predict_svm(model, &features)?;
    let values = model.decision_values(&features)?;
    Ok(GlyphPrediction {
        runner_up: runner_up(&model.classes, &values, &code),
        code,
        confidence: margin,
        unknown: false,
    })
}

fn classify_cnn(model: &SoftmaxClassifierModel, image: &GlyphImage) -> hieroscribe_core::Result<GlyphPrediction> {
    let p = predict_any(model, image)?;
    Ok(GlyphPrediction {
        runner_up: runner_up(model.classes(), &p.distribution, &p.code),
        code: p.code,
        confidence: p.confidence,
        unknown: false,
    })
}
