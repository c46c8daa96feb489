//! Classical behaviour-cloning baselines: MSE regression, per-dimension
//! discretisation, joint k-means classification and k-means with residuals.

mod kmeans;
mod model;

pub use kmeans::{kmeans_fit, Centroids};
pub use model::{
    sample_baseline, train_baseline, BaselineConfig, BaselineHead, BaselineKind, BaselineModel, HeadOutputs,
};
