//! Grad-CAM heatmaps from the classifier's last convolutional block.

use gutcheck_nn::{ForwardCtx, Graph, LayerSpec, Tensor};
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::dataset::ImageSample;
use crate::label::LabelClass;
use crate::pixels::{batch_tensor, Pixels, SIDE};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    /// Row-major values in [0, 1].
    pub values: Vec<f32>,
    pub target_class: LabelClass,
    pub n_images: usize,
    pub model_id: String,
}

impl Heatmap {
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    /// Fraction of the total map mass inside rows `y0..y1` and columns `x0..x1`.
    /// An all-zero map has no mass anywhere and returns 0.
    pub fn mass_fraction(&self, y0: usize, y1: usize, x0: usize, x1: usize) -> f64 {
        let total: f64 = self.values.iter().map(|&v| v as f64).sum();
        if total <= 0.0 {
            return 0.0;
        }
        let mut inside = 0.0;
        for y in y0..y1.min(self.height) {
            for x in x0..x1.min(self.width) {
                inside += self.get(y, x) as f64;
            }
        }
        inside / total
    }

    /// Mass fraction in the central square whose side is half the map's side,
    /// which covers a quarter of the area.
    pub fn center_quarter_mass(&self) -> f64 {
        let (h, w) = (self.height, self.width);
        self.mass_fraction(h / 4, h - h / 4, w / 4, w - w / 4)
    }
}

/// Index of the layer whose output is explained: the activation right after
/// the last convolution, or the convolution itself when nothing follows it.
pub fn target_layer(layers: &[LayerSpec]) -> Result<usize, Error> {
    let conv = layers
        .iter()
        .rposition(|l| matches!(l, LayerSpec::Conv2d { .. }))
        .ok_or_else(|| Error::Unsupported("model has no convolutional layer".into()))?;
    Ok(match layers.get(conv + 1) {
        Some(l) if l.is_activation() => conv + 1,
        _ => conv,
    })
}

/// Raw Grad-CAM pieces for one image, before upsampling.
#[derive(Debug, Clone)]
pub struct CamParts {
    /// Activations `[C, h, w]` of the explained layer.
    pub activations: Tensor,
    /// Gradient of the target logit with respect to `activations`.
    pub gradients: Tensor,
    /// Per-channel weights: spatial means of the logit gradient.
    pub weights: Vec<f32>,
    /// `relu(Σ_k w_k A_k)` at the layer's resolution.
    pub cam: Vec<f32>,
}

pub fn cam_parts(model: &Classifier, image: &Pixels, class_index: usize) -> Result<CamParts, Error> {
    let layer = target_layer(model.layers())?;
    if class_index >= model.classes().len() {
        return Err(Error::Usage(format!("class index {class_index} out of range")));
    }
    let mut g = Graph::new();
    let x = batch_tensor(&[image], 1.0, 0.0);
    let (logits, trace) = model.forward_traced(&mut g, true, x, &mut ForwardCtx::eval());
    let mut seed = Tensor::zeros(g.shape(logits));
    seed.data_mut()[class_index] = 1.0;
    let grads = g.backward_with(logits, seed);
    let act = trace[layer];
    let a = g.value(act).clone();
    let shape = a.shape().to_vec();
    let (c, h, w) = (shape[1], shape[2], shape[3]);
    let grad = grads.get(act).cloned().unwrap_or_else(|| Tensor::zeros(&shape));
    let plane = h * w;
    let weights: Vec<f32> = (0..c)
        .map(|k| grad.data()[k * plane..(k + 1) * plane].iter().sum::<f32>() / plane as f32)
        .collect();
    let mut cam = vec![0.0f32; plane];
    for (k, &wk) in weights.iter().enumerate() {
        for (o, &v) in cam.iter_mut().zip(&a.data()[k * plane..(k + 1) * plane]) {
            *o += wk * v;
        }
    }
    for v in &mut cam {
        *v = v.max(0.0);
    }
    Ok(CamParts {
        activations: Tensor::new(&[c, h, w], a.into_data()),
        gradients: Tensor::new(&[c, h, w], grad.into_data()),
        weights,
        cam,
    })
}

/// Single-channel bilinear resize with the same sampling convention as image standardization.
pub fn upsample(map: &[f32], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    let p = Pixels::new(h, w, map.iter().flat_map(|&v| [v, v, v]).collect());
    p.resize(out_h, out_w).data.chunks_exact(3).map(|c| c[0]).collect()
}

fn normalize(v: &mut [f32]) {
    let max = v.iter().copied().fold(0.0f32, f32::max);
    if max > 0.0 {
        for x in v.iter_mut() {
            *x = (*x / max).clamp(0.0, 1.0);
        }
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
}

fn model_id(model: &Classifier) -> String {
    model.fingerprint()
}

pub fn grad_cam(model: &Classifier, image: &ImageSample, target: LabelClass) -> Result<Heatmap, Error> {
    let idx = model
        .classes()
        .index_of(target)
        .ok_or_else(|| Error::Usage(format!("model does not predict class {target}")))?;
    let parts = cam_parts(model, &image.pixels, idx)?;
    let s = parts.activations.shape();
    let mut values = upsample(&parts.cam, s[1], s[2], SIDE, SIDE);
    normalize(&mut values);
    Ok(Heatmap {
        height: SIDE,
        width: SIDE,
        values,
        target_class: target,
        n_images: 1,
        model_id: model_id(model),
    })
}

/// Mean of the per-image normalized maps, renormalized to [0, 1].
pub fn average_heatmap(model: &Classifier, images: &[ImageSample], target: LabelClass) -> Result<Heatmap, Error> {
    if images.is_empty() {
        return Err(Error::InvalidInput("no images to explain".into()));
    }
    let mut acc = vec![0.0f64; SIDE * SIDE];
    for img in images {
        let h = grad_cam(model, img, target)?;
        for (a, &v) in acc.iter_mut().zip(&h.values) {
            *a += v as f64;
        }
    }
    let mut values: Vec<f32> = acc.iter().map(|&v| (v / images.len() as f64) as f32).collect();
    normalize(&mut values);
    Ok(Heatmap {
        height: SIDE,
        width: SIDE,
        values,
        target_class: target,
        n_images: images.len(),
        model_id: model_id(model),
    })
}
