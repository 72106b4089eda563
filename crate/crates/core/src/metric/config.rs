use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Axis a mirror augmentation may flip across.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MirrorAxis {
    /// No mirroring.
    None,
    /// Left–right flip. The only legal choice.
    Horizontal,
    /// Upside-down flip; produces invalid sign configurations and is rejected.
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricTrainConfig {
    pub margin: f64,
    pub augment_probability: f64,
    pub rotation_degrees: f64,
    /// Maximum shift as a fraction of width/height.
    pub shift_fraction: f64,
    pub mirror: MirrorAxis,
    /// Probability of mirroring once augmentation is triggered.
    pub mirror_probability: f64,
    pub band_probability: f64,
    /// Maximum band thickness as a fraction of the side.
    pub band_max_fraction: f64,
    pub occlusion_probability: f64,
    /// Maximum occlusion radius as a fraction of the side.
    pub occlusion_max_radius: f64,
    pub learning_rate: f32,
    pub lr_patience: usize,
    pub lr_factor: f32,
    /// Early-stopping patience in epochs.
    pub patience: usize,
    pub max_epochs: usize,
    pub pairs_per_epoch: usize,
    /// Pairs per optimizer step.
    pub batch_size: usize,
    pub positive_fraction: f64,
    /// Fixed, un-augmented pairs used for the validation loss.
    pub validation_pairs: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for MetricTrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.5,
            augment_probability: 0.5,
            rotation_degrees: 15.0,
            shift_fraction: 0.1,
            mirror: MirrorAxis::Horizontal,
            mirror_probability: 0.5,
            band_probability: 0.3,
            band_max_fraction: 0.12,
            occlusion_probability: 0.3,
            occlusion_max_radius: 0.15,
            learning_rate: 1e-3,
            lr_patience: 3,
            lr_factor: 0.5,
            patience: 5,
            max_epochs: 50,
            pairs_per_epoch: 50_000,
            batch_size: 64,
            positive_fraction: 0.5,
            validation_pairs: 2_000,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

impl MetricTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(0.0..1.0).contains(&self.margin) {
            return Err(Error::Config(format!("margin must be in [0, 1), got {}", self.margin)));
        }
        if self.mirror == MirrorAxis::Vertical {
            return Err(Error::Config(
                "vertical mirroring is not allowed; only horizontal mirroring is legal".into(),
            ));
        }
        for (name, p) in [
            ("augment_probability", self.augment_probability),
            ("mirror_probability", self.mirror_probability),
            ("band_probability", self.band_probability),
            ("occlusion_probability", self.occlusion_probability),
            ("positive_fraction", self.positive_fraction),
            ("shift_fraction", self.shift_fraction),
            ("band_max_fraction", self.band_max_fraction),
            ("occlusion_max_radius", self.occlusion_max_radius),
        ] {
            if !unit(p) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if !(0.0..=180.0).contains(&self.rotation_degrees) {
            return Err(Error::Config("rotation bound must be in [0, 180] degrees".into()));
        }
        if self.batch_size == 0 || self.pairs_per_epoch == 0 {
            return Err(Error::Config("batch size and pairs per epoch must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}
