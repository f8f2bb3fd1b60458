//! Single-image classification with an optional Grad-CAM map.

use std::time::Instant;

use base64::Engine as _;
use gutcheck_core::classifier::argmax;
use gutcheck_core::explain::grad_cam;
use gutcheck_core::report::heatmap_png;
use gutcheck_core::{standardize, ImageSample, LabelClass, Source};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::artifact::LoadedModel;
use crate::ServeError;

pub const MAX_IMAGE_BYTES: usize = 10 * 1024 * 1024;

pub const DISCLAIMER: &str = "This result comes from an automated screening aid and is not a medical diagnosis. \
It can be wrong. Talk to a doctor about any symptoms or concerns.";

pub const ADVISORY: &str = "Possible blood was detected in the stool. Please seek medical attention promptly \
so a doctor can check for bowel disease, including colorectal cancer.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub label: LabelClass,
    /// Keys follow the model's class order.
    pub probabilities: IndexMap<LabelClass, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap_png_b64: Option<String>,
    pub model_version: String,
    pub latency_ms: f64,
    pub disclaimer: String,
    /// Present only for the `abnormal` label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advisory: Option<String>,
}

/// Decodes, standardizes and classifies one uploaded image.
pub fn classify(model: &LoadedModel, bytes: &[u8], explain: bool) -> Result<Diagnosis, ServeError> {
    let started = Instant::now();
    if bytes.len() > MAX_IMAGE_BYTES {
        return Err(ServeError::TooLarge {
            size: bytes.len(),
            limit: MAX_IMAGE_BYTES,
        });
    }
    let img = image::load_from_memory(bytes).map_err(|e| ServeError::Undecodable(e.to_string()))?;
    let pixels = standardize(&img).map_err(|e| ServeError::Undecodable(e.to_string()))?;
    let logits = model.model.logits(&[&pixels]);
    let row = logits.data();
    // softmax in double precision so the probabilities sum to 1 tightly
    let m = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    let e: Vec<f64> = row.iter().map(|&v| (v as f64 - m).exp()).collect();
    let z: f64 = e.iter().sum();
    let probs: Vec<f64> = e.iter().map(|v| v / z).collect();
    let classes = &model.meta.classes;
    let label = classes[argmax(row)];
    let probabilities = classes.iter().copied().zip(probs).collect();
    let heatmap_png_b64 = if explain {
        let sample = ImageSample {
            id: "upload".into(),
            label,
            source: Source::Real,
            pixels,
        };
        let map = grad_cam(&model.model, &sample, label)?;
        let png = heatmap_png(&map, None)?;
        Some(base64::engine::general_purpose::STANDARD.encode(png))
    } else {
        None
    };
    Ok(Diagnosis {
        label,
        probabilities,
        heatmap_png_b64,
        model_version: model.meta.version.clone(),
        latency_ms: started.elapsed().as_secs_f64() * 1e3,
        disclaimer: DISCLAIMER.to_string(),
        advisory: (label == LabelClass::Abnormal).then(|| ADVISORY.to_string()),
    })
}
