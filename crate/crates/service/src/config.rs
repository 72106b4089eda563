//! Service configuration: JSON file plus `HIEROSCRIBE_*` environment overrides.

use std::path::{Path, PathBuf};

use hieroscribe_core::segmentation::SegmentationConfig;
use hieroscribe_core::transcription::GeometryConfig;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelPaths {
    pub encoder: PathBuf,
    pub centroids: PathBuf,
    pub svm: PathBuf,
    pub cnn: PathBuf,
}

impl ModelPaths {
    /// Standard file names inside `dir`, as written by `hieroscribe train`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            encoder: dir.join("encoder.json"),
            centroids: dir.join("centroids.json"),
            svm: dir.join("svm.json"),
            cnn: dir.join("cnn.json"),
        }
    }
}

impl Default for ModelPaths {
    fn default() -> Self {
        Self::in_dir(Path::new("models"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Upper bound on an uploaded facsimile, in bytes.
    pub max_upload_bytes: usize,
    pub models: ModelPaths,
    /// Deep-MML predictions below this similarity are flagged unknown.
    pub similarity_floor: Option<f64>,
    pub segmentation: SegmentationConfig,
    pub geometry: GeometryConfig,
    /// When set, each session is mirrored to `<dir>/<id>.json` after every change.
    pub snapshot_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            max_upload_bytes: 32 * 1024 * 1024,
            models: ModelPaths::default(),
            similarity_floor: None,
            segmentation: SegmentationConfig::default(),
            geometry: GeometryConfig::default(),
            snapshot_dir: None,
        }
    }
}

pub const ENV_PREFIX: &str = "HIEROSCRIBE_";

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e))?;
        serde_json::from_slice(&bytes).map_err(|e| ConfigError::Parse(path.to_path_buf(), e))
    }

    /// File (or defaults) with the process environment applied on top.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies overrides looked up through `var`, e.g. `HIEROSCRIBE_PORT`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let get = |name: &str| var(&format!("{ENV_PREFIX}{name}"));
        let parse_err = |name: &str, v: &str| ConfigError::Env(format!("{ENV_PREFIX}{name}={v:?}"));
        if let Some(v) = get("HOST") {
            self.host = v;
        }
        if let Some(v) = get("PORT") {
            self.port = v.parse().map_err(|_| parse_err("PORT", &v))?;
        }
        if let Some(v) = get("MAX_UPLOAD_BYTES") {
            self.max_upload_bytes = v.parse().map_err(|_| parse_err("MAX_UPLOAD_BYTES", &v))?;
        }
        if let Some(v) = get("SIMILARITY_FLOOR") {
            self.similarity_floor = Some(v.parse().map_err(|_| parse_err("SIMILARITY_FLOOR", &v))?);
        }
        if let Some(v) = get("MODEL_DIR") {
            self.models = ModelPaths::in_dir(Path::new(&v));
        }
        for (name, slot) in [
            ("ENCODER", &mut self.models.encoder),
            ("CENTROIDS", &mut self.models.centroids),
            ("SVM", &mut self.models.svm),
            ("CNN", &mut self.models.cnn),
        ] {
            if let Some(v) = get(name) {
                *slot = PathBuf::from(v);
            }
        }
        if let Some(v) = get("SNAPSHOT_DIR") {
            self.snapshot_dir = Some(PathBuf::from(v));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_upload_bytes == 0 {
            return Err(ConfigError::Invalid("max_upload_bytes must be positive".into()));
        }
        self.segmentation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.geometry
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
