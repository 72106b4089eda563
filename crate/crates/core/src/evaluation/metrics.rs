//! Balanced accuracy and per-class / per-group reports.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::code::GardinerCode;
use crate::error::{Error, Result};

fn check_lengths<T>(y_true: &[T], y_pred: &[T]) -> Result<()> {
    if y_true.is_empty() {
        return Err(Error::InvalidInput("no labels to evaluate".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidInput(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    Ok(())
}

/// Mean per-class recall over the classes present in `y_true`.
pub fn balanced_accuracy<T: Ord>(y_true: &[T], y_pred: &[T]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let mut counts: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    for (t, p) in y_true.iter().zip(y_pred) {
        let e = counts.entry(t).or_default();
        e.0 += 1;
        if t == p {
            e.1 += 1;
        }
    }
    let sum: f64 = counts.values().map(|&(n, hit)| hit as f64 / n as f64).sum();
    Ok(sum / counts.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub code: GardinerCode,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Predicted but never true: recall reported as 0.
    pub recall_undefined: bool,
    /// True but never predicted: precision reported as 0.
    pub precision_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    /// Sorted by code; includes classes that were only predicted.
    pub classes: Vec<ClassMetrics>,
    pub total: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// Unweighted mean F1 over all listed classes.
    pub macro_f1: f64,
    pub micro_f1: f64,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn per_class_report(y_true: &[GardinerCode], y_pred: &[GardinerCode]) -> Result<ClassReport> {
    check_lengths(y_true, y_pred)?;
    let codes: BTreeSet<&GardinerCode> = y_true.iter().chain(y_pred).collect();
    let mut tp: BTreeMap<&GardinerCode, usize> = BTreeMap::new();
    let mut true_n: BTreeMap<&GardinerCode, usize> = BTreeMap::new();
    let mut pred_n: BTreeMap<&GardinerCode, usize> = BTreeMap::new();
    for (t, p) in y_true.iter().zip(y_pred) {
        *true_n.entry(t).or_default() += 1;
        *pred_n.entry(p).or_default() += 1;
        if t == p {
            *tp.entry(t).or_default() += 1;
        }
    }
    let classes: Vec<ClassMetrics> = codes
        .into_iter()
        .map(|c| {
            let hit = tp.get(c).copied().unwrap_or(0) as f64;
            let support = true_n.get(c).copied().unwrap_or(0);
            let predicted = pred_n.get(c).copied().unwrap_or(0);
            let precision = if predicted == 0 { 0.0 } else { hit / predicted as f64 };
            let recall = if support == 0 { 0.0 } else { hit / support as f64 };
            ClassMetrics {
                code: c.clone(),
                precision,
                recall,
                f1: f1(precision, recall),
                support,
                recall_undefined: support == 0,
                precision_undefined: predicted == 0,
            }
        })
        .collect();
    let correct: usize = tp.values().sum();
    let accuracy = correct as f64 / y_true.len() as f64;
    let macro_f1 = classes.iter().map(|c| c.f1).sum::<f64>() / classes.len() as f64;
    Ok(ClassReport {
        balanced_accuracy: balanced_accuracy(y_true, y_pred)?,
        total: y_true.len(),
        accuracy,
        micro_f1: accuracy,
        macro_f1,
        classes,
    })
}

impl ClassReport {
    pub fn get(&self, code: &GardinerCode) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| &c.code == code)
    }

    /// `code,precision,recall,f1,support,recall_undefined`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["code", "precision", "recall", "f1", "support", "recall_undefined"])?;
        for c in &self.classes {
            w.write_record([
                c.code.to_string(),
                format!("{:.6}", c.precision),
                format!("{:.6}", c.recall),
                format!("{:.6}", c.f1),
                c.support.to_string(),
                c.recall_undefined.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupMode {
    /// Full alphabetic prefix: "Aa1" → "Aa".
    #[default]
    Prefix,
    /// First letter only: "Aa1" → "A".
    FirstLetter,
}

pub fn group_of(code: &GardinerCode, mode: GroupMode) -> String {
    let g = code.group();
    match mode {
        GroupMode::Prefix => g.to_string(),
        GroupMode::FirstLetter => g[..1].to_string(),
    }
}

/// Support-weighted mean F1 per group. `grouping` must cover every class.
pub fn group_report<F>(report: &ClassReport, grouping: F) -> Result<BTreeMap<String, f64>>
where
    F: Fn(&GardinerCode) -> Option<String>,
{
    let mut members: BTreeMap<String, Vec<&ClassMetrics>> = BTreeMap::new();
    for c in &report.classes {
        let g = grouping(&c.code).ok_or_else(|| Error::InvalidInput(format!("code {} has no group", c.code)))?;
        members.entry(g).or_default().push(c);
    }
    Ok(members
        .into_iter()
        .map(|(g, cs)| {
            let total: usize = cs.iter().map(|c| c.support).sum();
            let score = if total == 0 {
                0.0
            } else {
                cs.iter().map(|c| (c.support as f64 / total as f64) * c.f1).sum()
            };
            (g, score)
        })
        .collect())
}
