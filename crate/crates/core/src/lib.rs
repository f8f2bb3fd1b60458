//! Data-efficient image classification: labelled folders, stratified
//! cross-validation splits, classic and differentiable augmentation, three
//! GAN backends, Fréchet distance scoring, a small CNN classifier, Grad-CAM
//! and report rendering.

pub mod augment;
pub mod classifier;
pub mod dataset;
pub mod explain;
pub mod fid;
pub mod gan;
pub mod inception;
pub mod label;
pub mod pixels;
pub mod report;
pub mod split;
pub mod synth;

use std::path::PathBuf;

pub use dataset::{load_dataset, DatasetManifest, ImageSample, ManifestEntry, Source};
pub use label::{ClassSet, LabelClass};
pub use pixels::{standardize, standardize_pixels, Pixels};
pub use split::{make_split, SplitPlan};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dataset layout: {0}")]
    Structure(String),
    #[error("not enough `{class}` images: {message}")]
    Capacity { class: LabelClass, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("cannot encode image: {0}")]
    Encode(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("GAN training diverged at step {step} after {streak} non-finite steps")]
    GanDivergence {
        step: u64,
        streak: u32,
        log: Box<gan::TrainingLog>,
    },
    #[error("unsupported architecture: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Weights(#[from] gutcheck_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
