//! Class templates and nearest-centroid classification.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::{Embedding, EncoderModel};
use crate::code::GardinerCode;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::raster::GlyphImage;

pub const CENTROID_FORMAT_VERSION: u32 = 1;
pub const DEGENERATE_NORM: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidEntry {
    /// Mean of unit embeddings; not re-normalized.
    pub centroid: Vec<f64>,
    pub support: usize,
}

impl CentroidEntry {
    pub fn from_embeddings(embeddings: &[Embedding]) -> Result<Self> {
        let first = embeddings
            .first()
            .ok_or_else(|| Error::InvalidInput("a centroid needs at least one embedding".into()))?;
        let mut sum = vec![0.0; first.dim()];
        for z in embeddings {
            if z.dim() != sum.len() {
                return Err(Error::DimensionMismatch {
                    expected: sum.len(),
                    actual: z.dim(),
                });
            }
            sum.iter_mut().zip(z.as_slice()).for_each(|(s, &v)| *s += f64::from(v));
        }
        let n = embeddings.len() as f64;
        Ok(Self {
            centroid: sum.into_iter().map(|s| s / n).collect(),
            support: embeddings.len(),
        })
    }

    pub fn norm(&self) -> f64 {
        self.centroid.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_degenerate(&self) -> bool {
        self.norm() < DEGENERATE_NORM
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidTable {
    version: u32,
    dim: usize,
    encoder_fingerprint: String,
    entries: BTreeMap<GardinerCode, CentroidEntry>,
}

impl CentroidTable {
    pub fn new(dim: usize, encoder_fingerprint: impl Into<String>) -> Self {
        Self {
            version: CENTROID_FORMAT_VERSION,
            dim,
            encoder_fingerprint: encoder_fingerprint.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn from_entries(
        dim: usize,
        encoder_fingerprint: impl Into<String>,
        entries: impl IntoIterator<Item = (GardinerCode, CentroidEntry)>,
    ) -> Result<Self> {
        let mut table = Self::new(dim, encoder_fingerprint);
        for (code, entry) in entries {
            table.insert(code, entry, false)?;
        }
        Ok(table)
    }

    fn insert(&mut self, code: GardinerCode, entry: CentroidEntry, overwrite: bool) -> Result<()> {
        if entry.centroid.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: entry.centroid.len(),
            });
        }
        if entry.support == 0 {
            return Err(Error::InvalidInput(format!("centroid {code} has zero support")));
        }
        if !overwrite && self.entries.contains_key(&code) {
            return Err(Error::DuplicateKey(code.to_string()));
        }
        self.entries.insert(code, entry);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encoder_fingerprint(&self) -> &str {
        &self.encoder_fingerprint
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, code: &GardinerCode) -> Option<&CentroidEntry> {
        self.entries.get(code)
    }

    pub fn codes(&self) -> impl Iterator<Item = &GardinerCode> {
        self.entries.keys()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&GardinerCode, &CentroidEntry)> {
        self.entries.iter()
    }

    pub fn degenerate_codes(&self) -> Vec<&GardinerCode> {
        self.entries
            .iter()
            .filter(|(_, e)| e.is_degenerate())
            .map(|(c, _)| c)
            .collect()
    }

    pub fn check_encoder(&self, encoder: &EncoderModel) -> Result<()> {
        let fp = encoder.fingerprint();
        if fp != self.encoder_fingerprint {
            return Err(Error::ModelMismatch(format!(
                "centroid table was built with encoder {} but the loaded encoder is {}",
                self.encoder_fingerprint, fp
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    /// Loads a table, refusing it if it was built with a different encoder.
    pub fn load(path: &Path, encoder: Option<&EncoderModel>) -> Result<Self> {
        let table: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if table.version != CENTROID_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: table.version,
                expected: CENTROID_FORMAT_VERSION,
            });
        }
        if let Some(e) = table.entries.values().find(|e| e.centroid.len() != table.dim) {
            return Err(Error::DimensionMismatch {
                expected: table.dim,
                actual: e.centroid.len(),
            });
        }
        if let Some(enc) = encoder {
            table.check_encoder(enc)?;
        }
        Ok(table)
    }

    /// `code,support,c0,…,c{d-1}`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["code".to_string(), "support".to_string()];
        header.extend((0..self.dim).map(|i| format!("c{i}")));
        w.write_record(&header)?;
        for (code, e) in &self.entries {
            let mut row = vec![code.to_string(), e.support.to_string()];
            row.extend(e.centroid.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-class mean embeddings from `(code, image)` samples.
pub fn compute_centroids<'a, I>(encoder: &EncoderModel, samples: I, exec: Execution) -> Result<CentroidTable>
where
    I: IntoIterator<Item = (&'a GardinerCode, &'a GlyphImage)>,
{
    let mut by_class: BTreeMap<&GardinerCode, Vec<&GlyphImage>> = BTreeMap::new();
    for (code, img) in samples {
        by_class.entry(code).or_default().push(img);
    }
    if by_class.is_empty() {
        return Err(Error::InvalidInput("no classes to compute centroids for".into()));
    }
    let mut table = CentroidTable::new(encoder.embedding_dim(), encoder.fingerprint());
    for (code, images) in by_class {
        let embeddings = encoder.embed_batch(&images, exec)?;
        table.insert(code.clone(), CentroidEntry::from_embeddings(&embeddings)?, false)?;
    }
    let degenerate = table.degenerate_codes();
    if !degenerate.is_empty() {
        log::warn!("degenerate centroids: {degenerate:?}");
    }
    Ok(table)
}

/// Returns a new table with `code` added; `table` itself is left untouched.
pub fn register_class(
    table: &CentroidTable,
    code: GardinerCode,
    images: &[&GlyphImage],
    encoder: &EncoderModel,
    overwrite: bool,
) -> Result<CentroidTable> {
    table.check_encoder(encoder)?;
    if images.is_empty() {
        return Err(Error::InvalidInput("registration needs at least one image".into()));
    }
    if !overwrite && table.entries.contains_key(&code) {
        return Err(Error::DuplicateKey(code.to_string()));
    }
    let embeddings = encoder.embed_batch(images, Execution::Sequential)?;
    let mut next = table.clone();
    next.insert(code, CentroidEntry::from_embeddings(&embeddings)?, overwrite)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPrediction {
    pub code: GardinerCode,
    pub similarity: f64,
    pub runner_up: Option<(GardinerCode, f64)>,
    /// Set when a similarity floor was given and not reached.
    pub unknown: bool,
}

fn rank(a: &(&GardinerCode, f64), b: &(&GardinerCode, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Cosine similarity `z·c/‖c‖` of `z` to every non-degenerate centroid.
pub fn centroid_similarities<'t>(embedding: &Embedding, table: &'t CentroidTable) -> Result<Vec<(&'t GardinerCode, f64)>> {
    if embedding.dim() != table.dim {
        return Err(Error::DimensionMismatch {
            expected: table.dim,
            actual: embedding.dim(),
        });
    }
    let z = embedding.as_slice();
    Ok(table
        .entries
        .iter()
        .filter(|(_, e)| !e.is_degenerate())
        .map(|(code, e)| {
            let dot: f64 = e.centroid.iter().zip(z).map(|(c, &v)| c * f64::from(v)).sum();
            (code, (dot / e.norm()).clamp(-1.0, 1.0))
        })
        .collect())
}

pub fn classify_nearest_centroid(embedding: &Embedding, table: &CentroidTable) -> Result<MetricPrediction> {
    classify_with_floor(embedding, table, None)
}

/// Highest similarity wins, ties to the smallest code. With `floor` set, a
/// best similarity below it marks the prediction unknown.
pub fn classify_with_floor(embedding: &Embedding, table: &CentroidTable, floor: Option<f64>) -> Result<MetricPrediction> {
    if table.is_empty() {
        return Err(Error::InvalidInput("centroid table is empty".into()));
    }
    let mut sims = centroid_similarities(embedding, table)?;
    if sims.is_empty() {
        return Err(Error::InvalidInput("all centroids are degenerate".into()));
    }
    sims.sort_by(rank);
    let (code, similarity) = (sims[0].0.clone(), sims[0].1);
    Ok(MetricPrediction {
        code,
        similarity,
        runner_up: sims.get(1).map(|(c, s)| ((*c).clone(), *s)),
        unknown: floor.is_some_and(|t| similarity < t),
    })
}
