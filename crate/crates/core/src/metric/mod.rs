//! Siamese metric learning and nearest-centroid classification.

pub mod augment;
pub mod centroids;
pub mod config;
pub mod encoder;
pub mod loss;
pub mod pairs;
pub mod train;

pub use augment::augment;
pub use centroids::{
    classify_nearest_centroid, classify_with_floor, compute_centroids, register_class, CentroidEntry,
    CentroidTable, MetricPrediction,
};
pub use config::{MetricTrainConfig, MirrorAxis};
pub use encoder::{Embedding, EncoderConfig, EncoderModel};
pub use loss::{contrastive_loss, cosine_contrastive, PairLabel, DISSIMILAR, SIMILAR};
pub use pairs::{sample_pairs, PairSample};
pub use train::train_encoder;
