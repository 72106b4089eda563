//! MdC token assembly and the transcription CSV format.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::code::GardinerCode;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["support", "spell", "column", "token_index", "mdc", "review_status"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connector {
    /// `:` vertical stack.
    Stack,
    /// `*` side by side.
    Beside,
}

impl Connector {
    pub fn symbol(self) -> char {
        match self {
            Self::Stack => ':',
            Self::Beside => '*',
        }
    }
}

/// A labeled glyph in reading order, with its half-open box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedGlyph {
    pub bbox: (u32, u32, u32, u32),
    pub label: String,
}

impl PlacedGlyph {
    pub fn new(bbox: (u32, u32, u32, u32), label: impl Into<String>) -> Self {
        Self {
            bbox,
            label: label.into(),
        }
    }

    fn height(&self) -> f64 {
        f64::from(self.bbox.3 - self.bbox.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSign {
    pub code: GardinerCode,
    pub bbox: (u32, u32, u32, u32),
    /// Link to the previous sign; `None` for the first sign of a token.
    pub connector: Option<Connector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptionToken {
    pub signs: Vec<TokenSign>,
}

impl TranscriptionToken {
    pub fn mdc(&self) -> String {
        let mut s = String::new();
        for sign in &self.signs {
            if let Some(c) = sign.connector {
                s.push(c.symbol());
            }
            s.push_str(sign.code.as_str());
        }
        s
    }
}

/// Joins token renderings with `-`.
pub fn render_line(tokens: &[TranscriptionToken]) -> String {
    tokens.iter().map(TranscriptionToken::mdc).collect::<Vec<_>>().join("-")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    /// Vertical gap, in median glyph heights, below which overlapping glyphs stack.
    pub stack_gap: f64,
    /// Vertical gap, in median glyph heights, from which a new token always starts.
    pub token_gap: f64,
    /// Minimum extent overlap, as a fraction of the smaller extent.
    pub min_overlap: f64,
    /// Labels dropped before assembly.
    pub exclusions: Vec<String>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            stack_gap: 0.4,
            token_gap: 1.2,
            min_overlap: 0.5,
            exclusions: vec!["N".to_string()],
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.stack_gap >= 0.0 && self.stack_gap <= self.token_gap) {
            return Err(Error::Config(format!(
                "need 0 <= stack_gap <= token_gap, got {} and {}",
                self.stack_gap, self.token_gap
            )));
        }
        if !(0.0..=1.0).contains(&self.min_overlap) {
            return Err(Error::Config(format!("min_overlap {} outside [0, 1]", self.min_overlap)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionAudit {
    /// Position in the input column.
    pub position: usize,
    pub label: String,
    pub bbox: (u32, u32, u32, u32),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssembledColumn {
    pub tokens: Vec<TranscriptionToken>,
    pub excluded: Vec<ExclusionAudit>,
}

fn overlap_ratio(a0: u32, a1: u32, b0: u32, b1: u32) -> f64 {
    let inter = f64::from(a1.min(b1)) - f64::from(a0.max(b0));
    let smaller = f64::from((a1 - a0).min(b1 - b0)).max(1.0);
    inter.max(0.0) / smaller
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Groups one column of glyphs into MdC tokens.
///
/// Each glyph is compared with the one before it. Glyphs whose vertical
/// extents overlap by at least `min_overlap` join with `*`. Otherwise a
/// glyph stacks with `:` when its vertical gap is below `stack_gap` median
/// heights and the horizontal extents overlap by at least `min_overlap`.
/// Anything else, including every gap of `token_gap` heights or more,
/// starts a new token.
pub fn assemble_lines(column: &[PlacedGlyph], config: &GeometryConfig) -> Result<AssembledColumn> {
    config.validate()?;
    let mut out = AssembledColumn::default();
    let mut kept: Vec<(&PlacedGlyph, GardinerCode)> = Vec::new();
    for (position, g) in column.iter().enumerate() {
        if config.exclusions.iter().any(|e| e == &g.label) {
            out.excluded.push(ExclusionAudit {
                position,
                label: g.label.clone(),
                bbox: g.bbox,
            });
            continue;
        }
        if g.bbox.2 <= g.bbox.0 || g.bbox.3 <= g.bbox.1 {
            return Err(Error::InvalidInput(format!("glyph {position} has an empty box")));
        }
        kept.push((g, g.label.parse()?));
    }
    if kept.is_empty() {
        return Ok(out);
    }
    let h = median(kept.iter().map(|(g, _)| g.height()).collect());
    let mut current: Vec<TokenSign> = Vec::new();
    let mut prev: Option<&PlacedGlyph> = None;
    for (g, code) in kept {
        let connector = prev.and_then(|p| {
            let y_overlap = overlap_ratio(p.bbox.1, p.bbox.3, g.bbox.1, g.bbox.3);
            let x_overlap = overlap_ratio(p.bbox.0, p.bbox.2, g.bbox.0, g.bbox.2);
            let gap = f64::from(g.bbox.1) - f64::from(p.bbox.3);
            if y_overlap >= config.min_overlap {
                Some(Connector::Beside)
            } else if gap < config.stack_gap * h && x_overlap >= config.min_overlap {
                Some(Connector::Stack)
            } else {
                None
            }
        });
        if connector.is_none() && !current.is_empty() {
            out.tokens.push(TranscriptionToken {
                signs: std::mem::take(&mut current),
            });
        }
        current.push(TokenSign {
            code,
            bbox: g.bbox,
            connector,
        });
        prev = Some(g);
    }
    out.tokens.push(TranscriptionToken { signs: current });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    #[default]
    Auto,
    Corrected,
    Confirmed,
}

impl fmt::Display for ReviewStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::Corrected => "corrected",
            Self::Confirmed => "confirmed",
        })
    }
}

impl FromStr for ReviewStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "corrected" => Ok(Self::Corrected),
            "confirmed" => Ok(Self::Confirmed),
            other => Err(Error::InvalidInput(format!("unknown review status {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptionRecord {
    pub support: String,
    pub spell: String,
    pub column: String,
    pub token_index: usize,
    pub mdc: String,
    pub review_status: ReviewStatus,
}

impl TranscriptionRecord {
    fn key(&self) -> (&str, usize, &str, &str) {
        (&self.column, self.token_index, &self.support, &self.spell)
    }
}

/// Writes records sorted by `(column, token_index)`; returns the byte count.
pub fn export_csv<W: Write>(records: &[TranscriptionRecord], out: W) -> Result<usize> {
    let mut sorted: Vec<&TranscriptionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.key().cmp(&b.key()));
    let mut seen = BTreeSet::new();
    for r in &sorted {
        if !seen.insert(r.key()) {
            return Err(Error::DuplicateKey(format!(
                "support={:?} spell={:?} column={:?} token_index={}",
                r.support, r.spell, r.column, r.token_index
            )));
        }
    }
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .quote_style(csv::QuoteStyle::Necessary)
            .from_writer(&mut buf);
        w.write_record(CSV_HEADER)?;
        for r in sorted {
            w.write_record([
                r.support.as_str(),
                r.spell.as_str(),
                r.column.as_str(),
                &r.token_index.to_string(),
                r.mdc.as_str(),
                &r.review_status.to_string(),
            ])?;
        }
        w.flush()?;
    }
    let mut out = out;
    out.write_all(&buf)?;
    Ok(buf.len())
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<TranscriptionRecord>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidInput(format!("unexpected CSV header {header:?}")));
    }
    let mut records = Vec::new();
    for row in rd.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or_default().to_string();
        let token_index = field(3)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad token_index {:?}", field(3))))?;
        records.push(TranscriptionRecord {
            support: field(0),
            spell: field(1),
            column: field(2),
            token_index,
            mdc: field(4),
            review_status: field(5).parse()?,
        });
    }
    Ok(records)
}

/// One record per token of a column.
pub fn column_records(
    support: &str,
    spell: &str,
    column: &str,
    tokens: &[TranscriptionToken],
    status: impl Fn(&TranscriptionToken) -> ReviewStatus,
) -> Vec<TranscriptionRecord> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| TranscriptionRecord {
            support: support.to_string(),
            spell: spell.to_string(),
            column: column.to_string(),
            token_index: i,
            mdc: t.mdc(),
            review_status: status(t),
        })
        .collect()
}

/// Checks `CODE((:|*)CODE)*`.
pub fn is_valid_token(mdc: &str) -> bool {
    !mdc.is_empty() && mdc.split([':', '*']).all(crate::code::is_valid_code)
}
