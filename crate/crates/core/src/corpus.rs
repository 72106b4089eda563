//! Labeled glyph datasets: on-disk ingestion, reproducible splits and class
//! statistics for the imbalanced Gardiner taxonomy.
//!
//! Layout on disk is `<root>/<CODE>/<file>.png` with an optional
//! `<root>/manifest.csv` (`path,page_id`) mapping files to source pages.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::code::{is_valid_code, GardinerCode};
use crate::error::{Error, Result};
use crate::raster::{self, GlyphImage};

pub const DEFAULT_CANONICAL_SIZE: u32 = 100;
pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub image: GlyphImage,
    pub code: GardinerCode,
    pub page_id: Option<String>,
    pub sample_id: String,
}

#[derive(Debug)]
pub struct LoadReport {
    pub samples: Vec<LabeledSample>,
    /// Files that could not be decoded.
    pub skipped: Vec<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    path: String,
    page_id: String,
}

fn read_manifest(root: &Path) -> Result<HashMap<String, String>> {
    let path = root.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(HashMap::new());
    }
    let mut rdr = csv::Reader::from_path(&path)?;
    let mut map = HashMap::new();
    for row in rdr.deserialize() {
        let row: ManifestRow = row?;
        map.insert(row.path.replace('\\', "/"), row.page_id);
    }
    Ok(map)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads every raster under `root`, normalized to `canonical_size`×`canonical_size`.
///
/// Class labels come from directory names; samples are ordered
/// lexicographically by path. Undecodable files are skipped and reported.
pub fn load_dataset(root: &Path, canonical_size: u32) -> Result<LoadReport> {
    if canonical_size == 0 {
        return Err(Error::Config("canonical size must be positive".into()));
    }
    let manifest = read_manifest(root)?;
    let mut samples = Vec::new();
    let mut skipped = Vec::new();

    for class_dir in sorted_entries(root)? {
        if !class_dir.is_dir() {
            continue;
        }
        let name = class_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !is_valid_code(&name) {
            return Err(Error::InvalidClassDirectory {
                name,
                path: class_dir,
            });
        }
        let code = GardinerCode::new(name.clone())?;
        for file in sorted_entries(&class_dir)? {
            if !file.is_file() {
                continue;
            }
            let file_name = file.file_name().unwrap().to_string_lossy().into_owned();
            let sample_id = format!("{name}/{file_name}");
            match raster::load_gray(&file) {
                Ok(img) => samples.push(LabeledSample {
                    image: raster::to_canonical(&img, canonical_size),
                    code: code.clone(),
                    page_id: manifest.get(&sample_id).cloned(),
                    sample_id,
                }),
                Err(e) => {
                    warn!("skipping unreadable file {}: {e}", file.display());
                    skipped.push(file);
                }
            }
        }
    }

    if samples.is_empty() {
        return Err(Error::NoSamples(root.to_path_buf()));
    }
    if !skipped.is_empty() {
        warn!("skipped {} unreadable files under {}", skipped.len(), root.display());
    }
    Ok(LoadReport { samples, skipped })
}

/// Train/validation/test fractions of the non-held-out pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const fn new(train: f64, validation: f64, test: f64) -> Self {
        Self {
            train,
            validation,
            test,
        }
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config(format!("split ratios out of range: {self:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }

    fn nonzero_parts(&self) -> usize {
        [self.train, self.validation, self.test]
            .iter()
            .filter(|&&r| r > 0.0)
            .count()
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self::new(0.70, 0.15, 0.15)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Validation,
    TestRandom,
    TestPages,
}

/// Sample-id partition persisted alongside the seed and ratios that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test_random: Vec<String>,
    pub test_pages: Vec<String>,
    pub seed: u64,
    pub ratios: SplitRatios,
    pub held_out_pages: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl DatasetSplit {
    pub fn ids(&self, part: SplitPart) -> &[String] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Validation => &self.validation,
            SplitPart::TestRandom => &self.test_random,
            SplitPart::TestPages => &self.test_pages,
        }
    }

    /// Samples of `part`, in the split's stored order.
    pub fn select<'a>(&self, part: SplitPart, samples: &'a [LabeledSample]) -> Vec<&'a LabeledSample> {
        let by_id: HashMap<&str, &LabeledSample> =
            samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
        self.ids(part)
            .iter()
            .filter_map(|id| by_id.get(id.as_str()).copied())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

fn floor_count(n: usize, ratio: f64) -> usize {
    // 1e-9 absorbs representation error such as 0.15 * 100 = 15.000000000000002
    // or 0.7 * 10 = 6.999999999999999.
    (n as f64 * ratio + 1e-9).floor() as usize
}

/// Stratified, seeded split. Held-out pages go to `test_pages` wholesale;
/// each class of the remainder is split by floor rounding with the
/// remainder assigned to train.
pub fn make_splits(
    samples: &[LabeledSample],
    ratios: SplitRatios,
    held_out_pages: &BTreeSet<String>,
    seed: u64,
) -> Result<DatasetSplit> {
    ratios.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test_random: Vec::new(),
        test_pages: Vec::new(),
        seed,
        ratios,
        held_out_pages: held_out_pages.clone(),
        warnings: Vec::new(),
    };

    let mut by_class: BTreeMap<&GardinerCode, Vec<&str>> = BTreeMap::new();
    for s in samples {
        let held_out = s
            .page_id
            .as_ref()
            .is_some_and(|p| held_out_pages.contains(p));
        if held_out {
            split.test_pages.push(s.sample_id.clone());
        } else {
            by_class.entry(&s.code).or_default().push(&s.sample_id);
        }
    }

    let parts = ratios.nonzero_parts();
    for (code, mut ids) in by_class {
        ids.sort_unstable();
        let n = ids.len();
        if n < parts {
            let msg = format!(
                "class {code} has {n} samples for {parts} split parts; all assigned to train"
            );
            warn!("{msg}");
            split.warnings.push(msg);
            split.train.extend(ids.iter().map(|s| s.to_string()));
            continue;
        }
        ids.shuffle(&mut rng);
        let n_val = floor_count(n, ratios.validation);
        let n_test = floor_count(n, ratios.test);
        let (val, rest) = ids.split_at(n_val);
        let (test, train) = rest.split_at(n_test);
        split.validation.extend(val.iter().map(|s| s.to_string()));
        split.test_random.extend(test.iter().map(|s| s.to_string()));
        split.train.extend(train.iter().map(|s| s.to_string()));
    }
    Ok(split)
}

/// Exact per-class counts.
pub fn class_frequencies<'a, I>(codes: I) -> BTreeMap<GardinerCode, usize>
where
    I: IntoIterator<Item = &'a GardinerCode>,
{
    let mut freq = BTreeMap::new();
    for c in codes {
        *freq.entry(c.clone()).or_insert(0) += 1;
    }
    freq
}

/// Per-class loss weights, `w_c = N / (C · n_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeightTable {
    pub weights: BTreeMap<GardinerCode, f64>,
}

impl ClassWeightTable {
    /// Unit weights for the given classes.
    pub fn uniform<'a>(codes: impl IntoIterator<Item = &'a GardinerCode>) -> Self {
        Self {
            weights: codes.into_iter().map(|c| (c.clone(), 1.0)).collect(),
        }
    }

    pub fn get(&self, code: &GardinerCode) -> Option<f64> {
        self.weights.get(code).copied()
    }

    /// Weight lookup that treats unknown classes as weight 1.
    pub fn get_or_one(&self, code: &GardinerCode) -> f64 {
        self.get(code).unwrap_or(1.0)
    }
}

pub fn class_weights(frequencies: &BTreeMap<GardinerCode, usize>) -> Result<ClassWeightTable> {
    if let Some((code, _)) = frequencies.iter().find(|(_, &n)| n == 0) {
        return Err(Error::InvalidInput(format!("class {code} has zero samples")));
    }
    let total: usize = frequencies.values().sum();
    let classes = frequencies.len() as f64;
    let weights = frequencies
        .iter()
        .map(|(c, &n)| (c.clone(), total as f64 / (classes * n as f64)))
        .collect();
    Ok(ClassWeightTable { weights })
}
