//! Handcrafted-feature baseline: HOG plus projection profiles fed to a
//! class-weighted linear SVM.

pub mod features;
pub mod svm;

pub use features::{
    extract_features, extract_features_batch, hog_descriptor, projection_features, FeatureConfig, FeatureLayout,
    FeatureSegment, FeatureVector, Projections, SegmentKind,
};
pub use svm::{predict_svm, train_svm, LinearClassifierModel, SvmParams, SvmTrainOutcome};
