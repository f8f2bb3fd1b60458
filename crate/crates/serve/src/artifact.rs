//! Model directory: `meta.json` plus `weights.bin`.
//!
//! `weights.bin` is the engine's tensor container (magic, JSON header,
//! little-endian f32 payload). `meta.json` carries its SHA-256, and loading
//! refuses a directory whose weights do not hash to that value.

use std::fs;
use std::path::Path;

use gutcheck_core::classifier::{Classifier, InputContract, ModelDescriptor};
use gutcheck_core::LabelClass;
use gutcheck_nn::Container;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ServeError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format_version: u32,
    pub descriptor: ModelDescriptor,
    /// Output order of the logits; also the key order of response probabilities.
    pub classes: Vec<LabelClass>,
    pub input: InputContract,
    /// Content hash of descriptor and parameters.
    pub version: String,
    pub weights_sha256: String,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub meta: ModelMeta,
    pub model: Classifier,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `dir/meta.json` and `dir/weights.bin`, creating `dir` if needed.
pub fn export_model(model: &Classifier, provenance: serde_json::Value, dir: &Path) -> Result<ModelMeta, ServeError> {
    fs::create_dir_all(dir)?;
    let weights = model.to_container(serde_json::Value::Null).to_bytes();
    let meta = ModelMeta {
        format_version: FORMAT_VERSION,
        descriptor: model.descriptor.clone(),
        classes: model.classes().classes().to_vec(),
        input: model.descriptor.input.clone(),
        version: model.fingerprint(),
        weights_sha256: sha256_hex(&weights),
        provenance,
    };
    fs::write(dir.join("weights.bin"), &weights)?;
    fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(meta)
}

pub fn load_model(dir: &Path) -> Result<LoadedModel, ServeError> {
    let meta: ModelMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(ServeError::Artifact(format!("unsupported format version {}", meta.format_version)));
    }
    let bytes = fs::read(dir.join("weights.bin"))?;
    let found = sha256_hex(&bytes);
    if found != meta.weights_sha256 {
        return Err(ServeError::Checksum {
            expected: meta.weights_sha256.clone(),
            found,
        });
    }
    let model = Classifier::from_container(&Container::from_bytes(&bytes)?)?;
    if model.descriptor != meta.descriptor
        || model.classes().classes() != meta.classes.as_slice()
        || model.descriptor.input != meta.input
    {
        return Err(ServeError::Artifact("meta.json does not describe weights.bin".into()));
    }
    Ok(LoadedModel { meta, model })
}
