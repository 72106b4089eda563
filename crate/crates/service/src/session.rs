//! Per-session workflow state: facsimile, segmented glyphs, predictions, review.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use axum::http::StatusCode;
use hieroscribe_core::raster::GlyphImage;
use hieroscribe_core::segmentation::{segment_region, SegmentationConfig};
use hieroscribe_core::transcription::{
    assemble_lines, column_records, export_csv, GeometryConfig, PlacedGlyph, ReviewStatus, TranscriptionRecord,
};
use hieroscribe_core::GardinerCode;
use image::GrayImage;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backend::{BackendKind, Backends, GlyphPrediction};
use crate::error::ApiError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub support: String,
    pub spell: String,
}

impl Metadata {
    pub fn validate(&self) -> Result<(), ApiError> {
        if self.support.trim().is_empty() || self.spell.trim().is_empty() {
            return Err(ApiError::bad_request("metadata needs non-empty support and spell"));
        }
        Ok(())
    }
}

/// Half-open rectangle `[x0, x1) × [y0, y1)` in facsimile pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPrediction {
    #[serde(flatten)]
    pub prediction: GlyphPrediction,
    pub backend: BackendKind,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Glyph {
    pub id: usize,
    /// Facsimile-space half-open box.
    pub bbox: (u32, u32, u32, u32),
    pub area: usize,
    pub roi_index: usize,
    pub column: String,
    pub order_index: usize,
    /// Current code: the latest auto prediction or the expert's correction.
    pub code: Option<GardinerCode>,
    pub prediction: Option<StoredPrediction>,
    pub review_status: ReviewStatus,
    #[serde(skip)]
    pub crop: GlyphImage,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub metadata: Metadata,
    pub width: u32,
    pub height: u32,
    pub backend: BackendKind,
    pub rois: Vec<Roi>,
    pub glyphs: Vec<Glyph>,
    #[serde(skip)]
    pub image: GrayImage,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifiedGlyph {
    pub glyph_id: usize,
    pub code: Option<GardinerCode>,
    pub confidence: Option<f64>,
    pub runner_up: Option<(GardinerCode, f64)>,
    pub unknown: bool,
    pub latency_ms: Option<f64>,
    pub review_status: ReviewStatus,
    /// `false` for reviewed glyphs, which classification leaves alone.
    pub updated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyOutcome {
    pub backend: BackendKind,
    pub predictions: Vec<ClassifiedGlyph>,
    pub median_latency_ms: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Correction {
    pub glyph_id: usize,
    /// New code; omitted to confirm the current one.
    pub code: Option<String>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

impl Session {
    pub fn new(id: String, image: GrayImage, metadata: Metadata) -> Self {
        Self {
            id,
            metadata,
            width: image.width(),
            height: image.height(),
            backend: BackendKind::default(),
            rois: Vec::new(),
            glyphs: Vec::new(),
            image,
        }
    }

    /// Validates `[x0, y0, x1, y1]`; failures carry a clamped suggestion when one exists.
    pub fn check_roi(&self, roi: [i64; 4]) -> Result<Roi, ApiError> {
        let [x0, y0, x1, y1] = roi;
        if x1 <= x0 || y1 <= y0 {
            return Err(ApiError::bad_request(format!("roi {roi:?} has zero or negative area")));
        }
        let (w, h) = (i64::from(self.width), i64::from(self.height));
        if x0 < 0 || y0 < 0 || x1 > w || y1 > h {
            let c = [x0.clamp(0, w), y0.clamp(0, h), x1.clamp(0, w), y1.clamp(0, h)];
            let mut err = ApiError::bad_request(format!("roi {roi:?} exceeds the {w}x{h} facsimile"));
            err.kind = "roi_out_of_bounds";
            if c[2] > c[0] && c[3] > c[1] {
                err = err.with(json!({ "suggestion": c }));
            }
            return Err(err);
        }
        let u = |v: i64| v as u32;
        Ok(Roi {
            x0: u(x0),
            y0: u(y0),
            x1: u(x1),
            y1: u(y1),
        })
    }

    fn default_column_label(roi_index: usize, column: usize) -> String {
        format!("R{:02}C{:02}", roi_index + 1, column + 1)
    }

    /// Segments `roi` and appends the glyphs; returns the new glyph ids.
    pub fn segment(
        &mut self,
        roi: [i64; 4],
        column_labels: Option<&[String]>,
        config: &SegmentationConfig,
    ) -> Result<Vec<usize>, ApiError> {
        let roi = self.check_roi(roi)?;
        if let Some(labels) = column_labels {
            if let Some(bad) = labels.iter().find(|l| l.trim().is_empty()) {
                return Err(ApiError::bad_request(format!("empty column label {bad:?}")));
            }
        }
        let crop = image::imageops::crop_imm(&self.image, roi.x0, roi.y0, roi.x1 - roi.x0, roi.y1 - roi.y0).to_image();
        let found = segment_region(&crop, config)?;
        let roi_index = self.rois.len();
        self.rois.push(roi);
        let mut ids = Vec::with_capacity(found.len());
        for g in found {
            let b = g.bbox.translated(i64::from(roi.x0), i64::from(roi.y0));
            let column = column_labels
                .and_then(|l| l.get(g.column_index).cloned())
                .unwrap_or_else(|| Self::default_column_label(roi_index, g.column_index));
            let id = self.glyphs.len();
            self.glyphs.push(Glyph {
                id,
                bbox: b.bbox,
                area: b.area,
                roi_index,
                column,
                order_index: g.order_index,
                code: None,
                prediction: None,
                review_status: ReviewStatus::Auto,
                crop: g.crop,
            });
            ids.push(id);
        }
        Ok(ids)
    }

    /// Classifies every glyph still in `auto` state with `backend`.
    pub fn classify(&mut self, backend: BackendKind, backends: &Backends) -> Result<ClassifyOutcome, ApiError> {
        if let Err(u) = backends.status(backend) {
            return Err(ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "backend_unavailable",
                format!("backend {backend} needs model file {}: {}", u.model_file.display(), u.reason),
            )
            .with(json!({ "backend": backend, "model_file": u.model_file })));
        }
        self.backend = backend;
        let mut latencies = Vec::new();
        for g in &mut self.glyphs {
            if g.review_status != ReviewStatus::Auto {
                continue;
            }
            let start = Instant::now();
            let p = backends
                .classify(backend, &g.crop)
                .map_err(|u| ApiError::internal(format!("backend {} vanished", u.backend)))??;
            let latency_ms = start.elapsed().as_secs_f64() * 1e3;
            latencies.push(latency_ms);
            g.code = Some(p.code.clone());
            g.prediction = Some(StoredPrediction {
                prediction: p,
                backend,
                latency_ms,
            });
        }
        let predictions = self
            .glyphs
            .iter()
            .map(|g| {
                let p = g.prediction.as_ref();
                ClassifiedGlyph {
                    glyph_id: g.id,
                    code: g.code.clone(),
                    confidence: p.map(|p| p.prediction.confidence),
                    runner_up: p.and_then(|p| p.prediction.runner_up.clone()),
                    unknown: p.is_some_and(|p| p.prediction.unknown),
                    latency_ms: p.map(|p| p.latency_ms),
                    review_status: g.review_status,
                    updated: g.review_status == ReviewStatus::Auto,
                }
            })
            .collect();
        Ok(ClassifyOutcome {
            backend,
            predictions,
            median_latency_ms: median(latencies),
        })
    }

    /// Applies all corrections or none.
    pub fn apply_corrections(&mut self, corrections: &[Correction]) -> Result<Vec<usize>, ApiError> {
        let unknown: BTreeSet<usize> = corrections
            .iter()
            .map(|c| c.glyph_id)
            .filter(|&id| id >= self.glyphs.len())
            .collect();
        if !unknown.is_empty() {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_glyph",
                format!("no glyphs with ids {unknown:?}"),
            )
            .with(json!({ "unknown_glyph_ids": unknown })));
        }
        let mut parsed = Vec::with_capacity(corrections.len());
        let mut invalid = Vec::new();
        for c in corrections {
            match &c.code {
                Some(s) => match s.parse::<GardinerCode>() {
                    Ok(code) => parsed.push((c.glyph_id, Some(code))),
                    Err(_) => invalid.push(s.clone()),
                },
                None => {
                    if self.glyphs[c.glyph_id].code.is_none() {
                        return Err(ApiError::bad_request(format!(
                            "glyph {} has no code to confirm",
                            c.glyph_id
                        )));
                    }
                    parsed.push((c.glyph_id, None));
                }
            }
        }
        if !invalid.is_empty() {
            let mut err = ApiError::bad_request(format!("invalid Gardiner codes {invalid:?}"));
            err.kind = "invalid_code";
            return Err(err.with(json!({ "invalid_codes": invalid })));
        }
        let mut touched = Vec::new();
        for (id, code) in parsed {
            let g = &mut self.glyphs[id];
            match code {
                Some(code) => {
                    g.code = Some(code);
                    g.review_status = ReviewStatus::Corrected;
                }
                None if g.review_status == ReviewStatus::Auto => g.review_status = ReviewStatus::Confirmed,
                None => {}
            }
            touched.push(id);
        }
        Ok(touched)
    }

    /// Transcription records for every column, tokens assembled from current codes.
    pub fn records(&self, geometry: &GeometryConfig) -> Result<Vec<TranscriptionRecord>, ApiError> {
        let unclassified: Vec<usize> = self.glyphs.iter().filter(|g| g.code.is_none()).map(|g| g.id).collect();
        if !unclassified.is_empty() {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "unclassified_glyphs",
                format!("glyphs {unclassified:?} have no code yet; classify the session first"),
            )
            .with(json!({ "glyph_ids": unclassified })));
        }
        let mut columns: BTreeMap<&str, Vec<&Glyph>> = BTreeMap::new();
        for g in &self.glyphs {
            columns.entry(g.column.as_str()).or_default().push(g);
        }
        let mut records = Vec::new();
        for (label, mut glyphs) in columns {
            glyphs.sort_by_key(|g| (g.roi_index, g.order_index));
            let placed: Vec<PlacedGlyph> = glyphs
                .iter()
                .map(|g| PlacedGlyph::new(g.bbox, g.code.as_ref().expect("checked above").as_str()))
                .collect();
            let assembled = assemble_lines(&placed, geometry)?;
            for ex in &assembled.excluded {
                log::info!("session {}: column {label}: excluded {} at {:?}", self.id, ex.label, ex.bbox);
            }
            let excluded: BTreeSet<usize> = assembled.excluded.iter().map(|e| e.position).collect();
            let mut kept = glyphs
                .iter()
                .enumerate()
                .filter(|(i, _)| !excluded.contains(i))
                .map(|(_, g)| g.review_status);
            let statuses: Vec<ReviewStatus> = assembled
                .tokens
                .iter()
                .map(|t| {
                    let s: Vec<ReviewStatus> = kept.by_ref().take(t.signs.len()).collect();
                    if s.contains(&ReviewStatus::Corrected) {
                        ReviewStatus::Corrected
                    } else if s.iter().all(|&x| x == ReviewStatus::Confirmed) {
                        ReviewStatus::Confirmed
                    } else {
                        ReviewStatus::Auto
                    }
                })
                .collect();
            let mut rows = column_records(
                &self.metadata.support,
                &self.metadata.spell,
                label,
                &assembled.tokens,
                |_| ReviewStatus::Auto,
            );
            for (r, s) in rows.iter_mut().zip(statuses) {
                r.review_status = s;
            }
            records.extend(rows);
        }
        Ok(records)
    }

    pub fn export(&self, geometry: &GeometryConfig) -> Result<Vec<u8>, ApiError> {
        let records = self.records(geometry)?;
        let mut bytes = Vec::new();
        export_csv(&records, &mut bytes)?;
        Ok(bytes)
    }
}
