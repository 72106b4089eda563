//! Metrics, operating curves and embedding maps.

pub mod curves;
pub mod metrics;
pub mod tsne;

use std::io::Write;

use serde::Serialize;

pub use curves::{operating_curves, pr_curve, OperatingCurve, OperatingCurves, PrPoint, ScoredPrediction, ThresholdPoint};
pub use metrics::{balanced_accuracy, group_of, group_report, per_class_report, ClassMetrics, ClassReport, GroupMode};
pub use tsne::{embedding_map, tsne, ClassSummary, Ellipse, EmbeddingMap, MapPoint, TsneConfig};

use crate::error::Result;

/// Aggregates and curves as written to a JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationSummary<'a> {
    pub classifier: &'a str,
    pub total: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub groups: std::collections::BTreeMap<String, f64>,
    pub curves: Option<&'a OperatingCurves>,
}

impl<'a> EvaluationSummary<'a> {
    pub fn new(classifier: &'a str, report: &ClassReport, mode: GroupMode, curves: Option<&'a OperatingCurves>) -> Result<Self> {
        Ok(Self {
            classifier,
            total: report.total,
            accuracy: report.accuracy,
            balanced_accuracy: report.balanced_accuracy,
            macro_f1: report.macro_f1,
            micro_f1: report.micro_f1,
            groups: group_report(report, |c| Some(group_of(c, mode)))?,
            curves,
        })
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}
