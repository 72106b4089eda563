//! Segmentation, classification and MdC transcription of hieroglyphic facsimiles.

pub mod classic;
pub mod cnn;
pub mod code;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod metric;
pub mod nn;
pub mod raster;
pub mod segmentation;
pub mod synth;
pub mod transcription;

pub use code::GardinerCode;
pub use error::{Error, Result};
pub use exec::Execution;
