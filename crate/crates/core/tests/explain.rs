use gutcheck_core::classifier::Classifier;
use gutcheck_core::explain::*;
use gutcheck_core::synth::{planted_dataset, PlantedConfig};
use gutcheck_core::{ClassSet, ImageSample, LabelClass};
use gutcheck_nn::{stream, LayerSpec, Tensor};
use rand::Rng;

fn conv(in_ch: usize, out_ch: usize, stride: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        in_ch,
        out_ch,
        kernel: 3,
        stride,
        pad: 1,
        bias: true,
    }
}

/// A nonlinear tail after the explained layer, so the gradient varies per position.
fn model() -> Classifier {
    let layers = vec![
        conv(3, 4, 4),
        LayerSpec::Relu,
        conv(4, 6, 2),
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { kernel: 2, stride: 2 },
        LayerSpec::Flatten,
        LayerSpec::Dense {
            in_features: 6 * 8 * 8,
            out_features: 10,
        },
        LayerSpec::Tanh,
        LayerSpec::Dense {
            in_features: 10,
            out_features: 3,
        },
    ];
    Classifier::from_layers(layers, ClassSet::three(), 7)
}

fn image(seed: u64) -> ImageSample {
    planted_dataset(&[LabelClass::Abnormal], 1, seed, &PlantedConfig::default()).remove(0)
}

#[test]
fn target_layer_is_the_last_conv_activation() {
    let m = model();
    assert_eq!(target_layer(m.layers()).unwrap(), 3);
    assert_eq!(target_layer(&[conv(3, 1, 1)]).unwrap(), 0);
    assert!(target_layer(&[LayerSpec::Flatten]).is_err());
}

#[test]
fn logit_gradient_matches_finite_differences() {
    let m = model();
    let img = image(1);
    let layer = target_layer(m.layers()).unwrap();
    let eps = 1e-2f32;
    let mut rng = stream(&[3]);
    for class in 0..3 {
        let parts = cam_parts(&m, &img.pixels, class).unwrap();
        let a = &parts.activations;
        let s = a.shape().to_vec();
        let scale = parts.gradients.data().iter().fold(0.0f32, |m, v| m.max(v.abs())) as f64;
        let batch = |t: &Tensor| Tensor::new(&[1, s[0], s[1], s[2]], t.data().to_vec());
        let mut checked = 0;
        while checked < 10 {
            let i = rng.random_range(0..a.len());
            // stay off the ReLU kink of the explained activation
            if a.data()[i] <= 2.0 * eps {
                continue;
            }
            // nor near a tie inside its 2x2 max-pool window
            let (c, y, x) = (i / (s[1] * s[2]), i / s[2] % s[1], i % s[2]);
            let tie = (0..4).any(|k| {
                let j = c * s[1] * s[2] + ((y & !1) + k / 2) * s[2] + (x & !1) + k % 2;
                j != i && (a.data()[j] - a.data()[i]).abs() <= 2.0 * eps
            });
            if tie {
                continue;
            }
            let (mut p, mut q) = (a.clone(), a.clone());
            p.data_mut()[i] += eps;
            q.data_mut()[i] -= eps;
            let lp = m.forward_from(layer + 1, &batch(&p)).data()[class] as f64;
            let lq = m.forward_from(layer + 1, &batch(&q)).data()[class] as f64;
            let fd = (lp - lq) / (2.0 * eps as f64);
            let an = parts.gradients.data()[i] as f64;
            // relative to the largest gradient entry of this map
            assert!((fd - an).abs() <= 1e-3 * scale.max(an.abs()), "class {class} idx {i}: {an} vs {fd}");
            checked += 1;
        }
        let plane = s[1] * s[2];
        for (k, &w) in parts.weights.iter().enumerate() {
            let mean = parts.gradients.data()[k * plane..(k + 1) * plane].iter().sum::<f32>() / plane as f32;
            assert!((w - mean).abs() < 1e-6);
        }
        for (j, &c) in parts.cam.iter().enumerate() {
            let raw: f32 = (0..s[0]).map(|k| parts.weights[k] * a.data()[k * plane + j]).sum();
            assert!((c - raw.max(0.0)).abs() < 1e-5);
        }
    }
}

#[test]
fn all_negative_weights_give_the_zero_map() {
    // after ReLU activations are non-negative; a head with only negative
    // weights makes every channel weight negative
    let layers = vec![
        conv(3, 4, 4),
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense {
            in_features: 4 * 32 * 32,
            out_features: 3,
        },
    ];
    let mut m = Classifier::from_layers(layers, ClassSet::three(), 2);
    let w = m.store.id("net.3.weight").unwrap();
    for v in m.store.get_mut(w).data_mut() {
        *v = -v.abs() - 1e-3;
    }
    let img = image(2);
    let parts = cam_parts(&m, &img.pixels, 0).unwrap();
    assert!(parts.weights.iter().all(|&w| w < 0.0));
    let h = grad_cam(&m, &img, LabelClass::Abnormal).unwrap();
    assert!(h.values.iter().all(|&v| v == 0.0));
    assert_eq!(h.max(), 0.0);
    assert_eq!(h.center_quarter_mass(), 0.0);
}

#[test]
fn heatmaps_are_normalized_and_sized() {
    let m = model();
    let imgs: Vec<ImageSample> = (0..3).map(image).collect();
    let h = grad_cam(&m, &imgs[0], LabelClass::Normal).unwrap();
    assert_eq!((h.height, h.width, h.values.len()), (128, 128, 128 * 128));
    assert!(h.values.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(h.max() == 1.0 || h.max() == 0.0);
    assert_eq!(h.model_id, m.fingerprint());
    let avg = average_heatmap(&m, &imgs, LabelClass::Normal).unwrap();
    assert_eq!(avg.n_images, 3);
    assert!(avg.values.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(average_heatmap(&m, &[], LabelClass::Normal).is_err());
    let mut layers = model().layers().to_vec();
    layers.pop();
    layers.push(LayerSpec::Dense {
        in_features: 10,
        out_features: 2,
    });
    let two = Classifier::from_layers(layers, ClassSet::two(), 1);
    assert!(grad_cam(&two, &imgs[0], LabelClass::NoStool).is_err());
}

#[test]
fn mass_fraction_regions() {
    let mut values = vec![0.0f32; 16];
    values[5] = 1.0; // (1, 1), inside the central quarter
    values[0] = 1.0;
    let h = Heatmap {
        height: 4,
        width: 4,
        values,
        target_class: LabelClass::Abnormal,
        n_images: 1,
        model_id: String::new(),
    };
    assert_eq!(h.center_quarter_mass(), 0.5);
    assert_eq!(h.mass_fraction(0, 4, 0, 4), 1.0);
}

#[test]
fn upsampling_keeps_constants() {
    let up = upsample(&[0.25; 16], 4, 4, 128, 128);
    assert_eq!(up.len(), 128 * 128);
    assert!(up.iter().all(|&v| (v - 0.25).abs() < 1e-6));
}
