//! One-vs-rest linear SVM with per-class sample weights, trained by dual
//! coordinate descent on the L2-regularized hinge loss (bias folded in as a
//! constant feature).

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureLayout, FeatureVector};
use crate::code::GardinerCode;
use crate::corpus::ClassWeightTable;
use crate::error::{Error, Result};
use crate::evaluation::balanced_accuracy;
use crate::exec::Execution;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    /// Swept values of the hinge-loss penalty `C`.
    pub c_grid: Vec<f64>,
    /// Stop once the projected-gradient spread drops below this.
    pub tolerance: f64,
    pub max_epochs: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c_grid: vec![0.01, 0.1, 1.0, 10.0],
            tolerance: 0.1,
            max_epochs: 300,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifierModel {
    pub version: u32,
    /// Sorted lexicographically.
    pub classes: Vec<GardinerCode>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub layout: FeatureLayout,
    pub params: SvmParams,
    pub selected_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub c: f64,
    pub validation_balanced_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct SvmTrainOutcome {
    pub model: LinearClassifierModel,
    pub sweep: Vec<SweepPoint>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Binary dual coordinate descent. `y` is ±1, `upper` the per-sample box bound.
fn solve_binary(
    xs: &[&[f64]],
    sq_norms: &[f64],
    y: &[f64],
    upper: &[f64],
    params: &SvmParams,
    seed: u64,
) -> (Vec<f64>, f64) {
    let d = xs[0].len();
    let n = xs.len();
    let mut w = vec![0f64; d];
    let mut b = 0f64;
    let mut alpha = vec![0f64; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..params.max_epochs {
        order.shuffle(&mut rng);
        let (mut max_pg, mut min_pg) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let g = y[i] * (dot(&w, xs[i]) + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == upper[i] {
                g.max(0.0)
            } else {
                g
            };
            max_pg = max_pg.max(pg);
            min_pg = min_pg.min(pg);
            if pg.abs() > 1e-12 {
                let q = sq_norms[i] + 1.0;
                let old = alpha[i];
                alpha[i] = (old - g / q).clamp(0.0, upper[i]);
                let delta = (alpha[i] - old) * y[i];
                if delta != 0.0 {
                    w.iter_mut().zip(xs[i]).for_each(|(wj, xj)| *wj += delta * xj);
                    b += delta;
                }
            }
        }
        if max_pg - min_pg < params.tolerance {
            break;
        }
    }
    (w, b)
}

fn fit_ovr(
    xs: &[&[f64]],
    labels: &[GardinerCode],
    classes: &[GardinerCode],
    weights: &ClassWeightTable,
    c: f64,
    params: &SvmParams,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let sq_norms: Vec<f64> = xs.iter().map(|x| dot(x, x)).collect();
    let upper: Vec<f64> = labels.iter().map(|l| c * weights.get_or_one(l)).collect();
    let solved = params.exec.map_range(classes.len(), |k| {
        let y: Vec<f64> = labels
            .iter()
            .map(|l| if *l == classes[k] { 1.0 } else { -1.0 })
            .collect();
        solve_binary(xs, &sq_norms, &y, &upper, params, params.seed.wrapping_add(k as u64))
    });
    solved.into_iter().unzip()
}

fn check_features<'a>(features: &'a [FeatureVector]) -> Result<(&'a FeatureLayout, Vec<&'a [f64]>)> {
    let first = features
        .first()
        .ok_or_else(|| Error::InvalidInput("no training features".into()))?;
    let dim = first.dim();
    for f in features {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: f.dim(),
            });
        }
    }
    Ok((&first.layout, features.iter().map(|f| f.values.as_slice()).collect()))
}

/// Trains one model per swept `C` and keeps the best on `validation`
/// (balanced accuracy, ties to the smaller `C`). Without a validation set the
/// training set is used for selection.
pub fn train_svm(
    features: &[FeatureVector],
    labels: &[GardinerCode],
    weights: &ClassWeightTable,
    validation: Option<(&[FeatureVector], &[GardinerCode])>,
    params: &SvmParams,
) -> Result<SvmTrainOutcome> {
    if features.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature vectors for {} labels",
            features.len(),
            labels.len()
        )));
    }
    let (layout, xs) = check_features(features)?;
    let classes: Vec<GardinerCode> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::InvalidInput("SVM training needs at least two classes".into()));
    }
    if xs.iter().all(|x| *x == xs[0]) {
        return Err(Error::InvalidInput(
            "all feature vectors are identical; no separating direction exists".into(),
        ));
    }
    if params.c_grid.is_empty() || params.c_grid.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::Config("C grid must be non-empty and positive".into()));
    }
    let (val_x, val_y) = match validation {
        Some((vx, vy)) if !vx.is_empty() => {
            if vx.len() != vy.len() {
                return Err(Error::InvalidInput("validation features/labels length mismatch".into()));
            }
            (vx, vy)
        }
        _ => {
            warn!("no validation split supplied; selecting C on the training set");
            (features, labels)
        }
    };

    let mut best: Option<(f64, LinearClassifierModel)> = None;
    let mut sweep = Vec::new();
    for &c in &params.c_grid {
        let (w, b) = fit_ovr(&xs, labels, &classes, weights, c, params);
        let model = LinearClassifierModel {
            version: MODEL_FORMAT_VERSION,
            classes: classes.clone(),
            weights: w,
            biases: b,
            layout: layout.clone(),
            params: params.clone(),
            selected_c: c,
        };
        let preds = val_x
            .iter()
            .map(|f| predict_svm(&model, f).map(|(code, _)| code))
            .collect::<Result<Vec<_>>>()?;
        let score = balanced_accuracy(val_y, &preds)?;
        info!("svm C={c}: validation balanced accuracy {score:.4}");
        sweep.push(SweepPoint {
            c,
            validation_balanced_accuracy: score,
        });
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, model));
        }
    }
    Ok(SvmTrainOutcome {
        model: best.expect("grid is non-empty").1,
        sweep,
    })
}

impl LinearClassifierModel {
    pub fn decision_values(&self, feature: &FeatureVector) -> Result<Vec<f64>> {
        let dim = self.weights.first().map_or(0, Vec::len);
        if feature.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: feature.dim(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, &feature.values) + b)
            .collect())
    }

    pub fn check_layout(&self, expected: &FeatureLayout) -> Result<()> {
        if &self.layout != expected {
            return Err(Error::ModelMismatch(format!(
                "model feature layout {:?} does not match extractor layout {:?}",
                self.layout, expected
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    /// Loads a model, refusing it when `expected_layout` is given and differs.
    pub fn load(path: &Path, expected_layout: Option<&FeatureLayout>) -> Result<Self> {
        let model: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: model.version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        if let Some(layout) = expected_layout {
            model.check_layout(layout)?;
        }
        Ok(model)
    }
}

/// Highest decision value wins; exact ties go to the lexicographically
/// smallest code regardless of storage order.
pub fn predict_svm(model: &LinearClassifierModel, feature: &FeatureVector) -> Result<(GardinerCode, f64)> {
    let values = model.decision_values(feature)?;
    let (idx, margin) = values
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| match a.total_cmp(b) {
            Ordering::Equal => model.classes[*j].cmp(&model.classes[*i]),
            o => o,
        })
        .map(|(i, v)| (i, *v))
        .ok_or_else(|| Error::InvalidInput("model has no classes".into()))?;
    Ok((model.classes[idx].clone(), margin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classic::features::{FeatureConfig, FeatureSegment, SegmentKind};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn layout(dim: usize) -> FeatureLayout {
        FeatureLayout {
            image_size: (0, 0),
            config: FeatureConfig::default(),
            segments: vec![FeatureSegment {
                kind: SegmentKind::Hog,
                offset: 0,
                len: dim,
            }],
        }
    }

    fn fv(values: Vec<f64>) -> FeatureVector {
        let l = layout(values.len());
        FeatureVector { values, layout: l }
    }

    fn code(s: &str) -> GardinerCode {
        GardinerCode::new(s).unwrap()
    }

    fn blobs(n: usize, seed: u64) -> (Vec<FeatureVector>, Vec<GardinerCode>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let (cx, c) = if i % 2 == 0 { (2.0, "A1") } else { (-2.0, "B1") };
            xs.push(fv(vec![cx + noise.sample(&mut rng), noise.sample(&mut rng), rng.random::<f64>()]));
            ys.push(code(c));
        }
        (xs, ys)
    }

    #[test]
    fn separable_blobs() {
        let (xs, ys) = blobs(60, 1);
        let w = ClassWeightTable::uniform(&[code("A1"), code("B1")]);
        let out = train_svm(&xs, &ys, &w, None, &SvmParams::default()).unwrap();
        let preds: Vec<_> = xs.iter().map(|x| predict_svm(&out.model, x).unwrap().0).collect();
        assert_eq!(balanced_accuracy(&ys, &preds).unwrap(), 1.0);
        assert_eq!(out.sweep.len(), 4);

        let (test_x, test_y) = blobs(100, 99);
        let correct = test_x
            .iter()
            .zip(&test_y)
            .filter(|(x, y)| predict_svm(&out.model, x).unwrap().0 == **y)
            .count();
        assert!(correct >= 95, "{correct}");
    }

    #[test]
    fn far_point_positive_margin() {
        let (xs, ys) = blobs(40, 2);
        let w = ClassWeightTable::uniform(&[code("A1"), code("B1")]);
        let m = train_svm(&xs, &ys, &w, None, &SvmParams::default()).unwrap().model;
        let (c, margin) = predict_svm(&m, &fv(vec![10.0, 0.0, 0.5])).unwrap();
        assert_eq!(c.as_str(), "A1");
        assert!(margin > 0.0);
    }

    #[test]
    fn single_class_rejected() {
        let xs = vec![fv(vec![1.0]), fv(vec![2.0])];
        let ys = vec![code("A1"), code("A1")];
        let w = ClassWeightTable::uniform(&[code("A1")]);
        assert!(train_svm(&xs, &ys, &w, None, &SvmParams::default()).is_err());
    }

    #[test]
    fn identical_features_rejected() {
        let xs = vec![fv(vec![1.0, 1.0]); 4];
        let ys = vec![code("A1"), code("B1"), code("A1"), code("B1")];
        let w = ClassWeightTable::uniform(&[code("A1"), code("B1")]);
        assert!(train_svm(&xs, &ys, &w, None, &SvmParams::default()).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let xs = vec![fv(vec![1.0, 0.0]), fv(vec![0.0])];
        let ys = vec![code("A1"), code("B1")];
        let w = ClassWeightTable::uniform(&[code("A1"), code("B1")]);
        assert!(matches!(
            train_svm(&xs, &ys, &w, None, &SvmParams::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn tie_model(classes: [&str; 2]) -> LinearClassifierModel {
        LinearClassifierModel {
            version: MODEL_FORMAT_VERSION,
            classes: classes.iter().map(|c| code(c)).collect(),
            weights: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            biases: vec![0.0, 0.0],
            layout: layout(2),
            params: SvmParams::default(),
            selected_c: 1.0,
        }
    }

    #[test]
    fn tie_breaks_lexicographically_in_any_storage_order() {
        let x = fv(vec![0.5, 0.3]);
        assert_eq!(predict_svm(&tie_model(["A1", "B1"]), &x).unwrap().0.as_str(), "A1");
        assert_eq!(predict_svm(&tie_model(["B1", "A1"]), &x).unwrap().0.as_str(), "A1");
    }

    #[test]
    fn predict_dimension_mismatch() {
        assert!(predict_svm(&tie_model(["A1", "B1"]), &fv(vec![1.0])).is_err());
    }

    #[test]
    fn layout_mismatch_refused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("svm.json");
        let m = tie_model(["A1", "B1"]);
        m.save(&p).unwrap();
        assert!(LinearClassifierModel::load(&p, Some(&layout(2))).is_ok());
        assert!(matches!(
            LinearClassifierModel::load(&p, Some(&layout(3))),
            Err(Error::ModelMismatch(_))
        ));
    }

    #[test]
    fn upweighting_never_hurts_recall() {
        // Overlapping classes so that weighting matters.
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 1.0).unwrap();
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for i in 0..80 {
                let minority = i % 4 == 0;
                let cx = if minority { 0.8 } else { -0.8 };
                xs.push(fv(vec![cx + noise.sample(&mut rng), noise.sample(&mut rng)]));
                ys.push(code(if minority { "B1" } else { "A1" }));
            }
            let params = SvmParams {
                c_grid: vec![1.0],
                seed,
                ..SvmParams::default()
            };
            let recall = |wb: f64| {
                let w = ClassWeightTable {
                    weights: [(code("A1"), 1.0), (code("B1"), wb)].into_iter().collect(),
                };
                let m = train_svm(&xs, &ys, &w, None, &params).unwrap().model;
                let hits = xs
                    .iter()
                    .zip(&ys)
                    .filter(|(x, y)| y.as_str() == "B1" && predict_svm(&m, x).unwrap().0 == **y)
                    .count();
                hits as f64 / 20.0
            };
            let base = recall(1.0);
            let doubled = recall(2.0);
            assert!(doubled >= base, "seed {seed}: {doubled} < {base}");
        }
    }
}
