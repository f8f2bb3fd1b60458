//! Model export and the HTTP classification service used by the web UI.

pub mod artifact;
pub mod diagnose;
pub mod http;

pub use artifact::{export_model, load_model, LoadedModel, ModelMeta};
pub use diagnose::{classify, Diagnosis, ADVISORY, DISCLAIMER, MAX_IMAGE_BYTES};
pub use http::{router, AppState};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("weights checksum mismatch: meta.json says {expected}, file hashes to {found}")]
    Checksum { expected: String, found: String },
    #[error("invalid model artifact: {0}")]
    Artifact(String),
    #[error("image is {size} bytes; the limit is {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("cannot decode image: {0}")]
    Undecodable(String),
    #[error("no model is loaded")]
    NoModel,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Core(#[from] gutcheck_core::Error),
    #[error(transparent)]
    Weights(#[from] gutcheck_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// JSON Schema (draft 2020-12) of every response body, under `$defs`.
pub const API_SCHEMA: &str = include_str!("../api/schema.json");
