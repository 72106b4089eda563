//! Accuracy-vs-threshold and one-vs-rest precision/recall curves.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::code::GardinerCode;
use crate::error::{Error, Result};

/// One classifier output: predicted code and its confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub code: GardinerCode,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    /// `None` when no sample is accepted.
    pub accuracy: Option<f64>,
    pub coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatingCurve {
    AccVsThreshold {
        points: Vec<ThresholdPoint>,
    },
    /// `class` is `None` for the macro-averaged curve.
    PrOvr {
        class: Option<GardinerCode>,
        points: Vec<PrPoint>,
    },
}

impl OperatingCurve {
    pub fn thresholds(&self) -> Vec<f64> {
        match self {
            Self::AccVsThreshold { points } => points.iter().map(|p| p.threshold).collect(),
            Self::PrOvr { points, .. } => points.iter().map(|p| p.threshold).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCurves {
    pub accuracy: OperatingCurve,
    pub macro_pr: OperatingCurve,
    pub per_class: Vec<OperatingCurve>,
}

impl OperatingCurves {
    pub fn all(&self) -> impl Iterator<Item = &OperatingCurve> {
        [&self.accuracy, &self.macro_pr].into_iter().chain(&self.per_class)
    }
}

fn pr_at(scores: &[ScoredPrediction], y_true: &[GardinerCode], class: &GardinerCode, t: f64, support: usize) -> (f64, Option<f64>) {
    let mut predicted = 0usize;
    let mut hit = 0usize;
    for (s, y) in scores.iter().zip(y_true) {
        if &s.code == class && s.confidence >= t {
            predicted += 1;
            if y == class {
                hit += 1;
            }
        }
    }
    let recall = hit as f64 / support as f64;
    let precision = (predicted > 0).then(|| hit as f64 / predicted as f64);
    (recall, precision)
}

/// Precision/recall for `class` at every distinct confidence it was predicted with.
pub fn pr_curve(scores: &[ScoredPrediction], y_true: &[GardinerCode], class: &GardinerCode) -> Vec<PrPoint> {
    let support = y_true.iter().filter(|y| *y == class).count();
    if support == 0 {
        return Vec::new();
    }
    let mut ts: Vec<f64> = scores.iter().filter(|s| &s.code == class).map(|s| s.confidence).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts.into_iter()
        .map(|t| {
            let (recall, precision) = pr_at(scores, y_true, class, t, support);
            PrPoint {
                threshold: t,
                recall,
                precision: precision.expect("threshold taken from a prediction of this class"),
            }
        })
        .collect()
}

/// Builds the accuracy/coverage curve at `thresholds` (strictly ascending),
/// one PR curve per true class, and a macro PR curve at `thresholds` that
/// averages recall over all true classes and precision over classes with at
/// least one accepted prediction.
pub fn operating_curves(
    scores: &[ScoredPrediction],
    y_true: &[GardinerCode],
    thresholds: &[f64],
) -> Result<OperatingCurves> {
    if scores.len() != y_true.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores for {} labels",
            scores.len(),
            y_true.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores to evaluate".into()));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) || thresholds.iter().any(|t| t.is_nan()) {
        return Err(Error::InvalidInput("thresholds must be strictly ascending".into()));
    }
    let n = scores.len() as f64;
    let acc_points = thresholds
        .iter()
        .map(|&t| {
            let mut accepted = 0usize;
            let mut correct = 0usize;
            for (s, y) in scores.iter().zip(y_true) {
                if s.confidence >= t {
                    accepted += 1;
                    if &s.code == y {
                        correct += 1;
                    }
                }
            }
            ThresholdPoint {
                threshold: t,
                accuracy: (accepted > 0).then(|| correct as f64 / accepted as f64),
                coverage: accepted as f64 / n,
            }
        })
        .collect();

    let mut support: BTreeMap<&GardinerCode, usize> = BTreeMap::new();
    for y in y_true {
        *support.entry(y).or_default() += 1;
    }
    let classes: BTreeSet<&GardinerCode> = support.keys().copied().collect();
    let macro_points = thresholds
        .iter()
        .map(|&t| {
            let mut recall_sum = 0.0;
            let mut precision_sum = 0.0;
            let mut precision_n = 0usize;
            for c in &classes {
                let (r, p) = pr_at(scores, y_true, c, t, support[c]);
                recall_sum += r;
                if let Some(p) = p {
                    precision_sum += p;
                    precision_n += 1;
                }
            }
            PrPoint {
                threshold: t,
                recall: recall_sum / classes.len() as f64,
                precision: if precision_n == 0 { 1.0 } else { precision_sum / precision_n as f64 },
            }
        })
        .collect();
    let per_class = classes
        .iter()
        .map(|c| OperatingCurve::PrOvr {
            class: Some((*c).clone()),
            points: pr_curve(scores, y_true, c),
        })
        .collect();
    Ok(OperatingCurves {
        accuracy: OperatingCurve::AccVsThreshold { points: acc_points },
        macro_pr: OperatingCurve::PrOvr {
            class: None,
            points: macro_points,
        },
        per_class,
    })
}
