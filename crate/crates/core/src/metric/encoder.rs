//! Convolutional encoder producing unit-norm embeddings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nn::{DenseSpec, Network, NetworkSpec};
use crate::raster::{self, GlyphImage};

pub const ENCODER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_size: usize,
    pub conv_channels: Vec<usize>,
    pub embedding_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            conv_channels: vec![16, 32, 64, 64],
            embedding_dim: 128,
        }
    }
}

impl EncoderConfig {
    /// Small encoder for 40×40 inputs that trains in minutes on one core.
    pub fn desk() -> Self {
        Self {
            input_size: 40,
            conv_channels: vec![8, 16, 32],
            embedding_dim: 128,
        }
    }

    fn network_spec(&self) -> NetworkSpec {
        NetworkSpec {
            input_size: self.input_size,
            conv_channels: self.conv_channels.clone(),
            dense: vec![DenseSpec {
                out: self.embedding_dim,
                relu: false,
            }],
        }
    }
}

/// An L2-normalized embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    vector: Vec<f32>,
}

impl Embedding {
    /// Normalizes `raw`; an all-zero vector maps to the uniform unit vector.
    pub fn from_raw(raw: &[f32]) -> Self {
        let norm = raw.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        let vector = if norm > 1e-12 {
            raw.iter().map(|&x| (f64::from(x) / norm) as f32).collect()
        } else {
            let v = (1.0 / (raw.len() as f64).sqrt()) as f32;
            vec![v; raw.len()]
        };
        Self { vector }
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.vector.iter().map(|&x| f64::from(x)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderModel {
    version: u32,
    config: EncoderConfig,
    network: Network,
}

impl EncoderModel {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        let network = Network::new(config.network_spec(), seed)?;
        Ok(Self {
            version: ENCODER_FORMAT_VERSION,
            config,
            network,
        })
    }

    pub(crate) fn from_parts(config: EncoderConfig, network: Network) -> Result<Self> {
        if network.spec() != &config.network_spec() {
            return Err(Error::ModelMismatch("encoder network does not match its config".into()));
        }
        Ok(Self {
            version: ENCODER_FORMAT_VERSION,
            config,
            network,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn input_size(&self) -> u32 {
        self.config.input_size as u32
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub(crate) fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn fingerprint(&self) -> String {
        self.network.fingerprint()
    }

    /// Aspect-preserving resize to the input size, then ink intensities in `[0, 1]`.
    pub fn preprocess(&self, image: &GlyphImage) -> Vec<f32> {
        raster::ink_values(&raster::to_canonical(image, self.input_size()))
    }

    fn check_size(&self, image: &GlyphImage) -> Result<()> {
        let s = self.input_size();
        if image.dimensions() != (s, s) {
            return Err(Error::ImageSize {
                expected_w: s,
                expected_h: s,
                actual_w: image.width(),
                actual_h: image.height(),
            });
        }
        Ok(())
    }

    /// Embeds an image already at the encoder's input size.
    pub fn embed(&self, image: &GlyphImage) -> Result<Embedding> {
        self.check_size(image)?;
        let raw = self.network.forward(&raster::ink_values(image))?;
        Ok(Embedding::from_raw(&raw))
    }

    /// Embeds an image of any size after [`preprocess`](Self::preprocess).
    pub fn embed_any(&self, image: &GlyphImage) -> Result<Embedding> {
        let raw = self.network.forward(&self.preprocess(image))?;
        Ok(Embedding::from_raw(&raw))
    }

    pub fn embed_batch(&self, images: &[&GlyphImage], exec: Execution) -> Result<Vec<Embedding>> {
        exec.map(images, |img| self.embed_any(img)).into_iter().collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if model.version != ENCODER_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: model.version,
                expected: ENCODER_FORMAT_VERSION,
            });
        }
        if model.network.spec() != &model.config.network_spec() {
            return Err(Error::ModelMismatch("encoder network does not match its config".into()));
        }
        Ok(model)
    }
}
