use std::collections::BTreeMap;

use gutcheck_core::classifier::*;
use gutcheck_core::gan::{Backend, GanConfig, GeneratorState};
use gutcheck_core::synth::{in_memory_manifest, planted_dataset, PlantedConfig};
use gutcheck_core::*;
use gutcheck_nn::LayerSpec;

fn flat(label: LabelClass, i: usize, rgb: [f32; 3]) -> ImageSample {
    let jitter = (i % 5) as f32 * 3.0;
    ImageSample {
        id: format!("{}/flat_{i:03}", label.as_str()),
        label,
        source: Source::Real,
        pixels: Pixels::filled(128, 128, [rgb[0] + jitter, rgb[1] + jitter, rgb[2] + jitter]),
    }
}

/// One conv, one dense layer; small enough to build per test.
fn small_layers(classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d {
            in_ch: 3,
            out_ch: 2,
            kernel: 3,
            stride: 4,
            pad: 1,
            bias: true,
        },
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense {
            in_features: 2 * 32 * 32,
            out_features: classes,
        },
    ]
}

fn desk_config(epochs: usize) -> ClassifierConfig {
    ClassifierConfig {
        architecture: Architecture::desk(),
        epochs,
        batch_size: 8,
        use_classic_augment: false,
        ..Default::default()
    }
}

#[test]
fn probabilities_lie_on_the_simplex() {
    let m = Classifier::from_layers(small_layers(3), ClassSet::three(), 1);
    let imgs: Vec<ImageSample> = (0..5).map(|i| flat(LabelClass::Normal, i, [10.0 * i as f32, 100.0, 200.0])).collect();
    let refs: Vec<&Pixels> = imgs.iter().map(|s| &s.pixels).collect();
    for p in m.predict_proba(&refs) {
        assert_eq!(p.len(), 3);
        assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!((p.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn softmax_and_argmax_helpers() {
    let p = softmax(&[1000.0, 1000.0, -1000.0]);
    assert!((p[0] - 0.5).abs() < 1e-6 && p[2] == 0.0);
    assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
}

#[test]
fn constant_predictor_scores_the_majority_share() {
    // a test set shaped 60 abnormal / 40 no_stool / 60 normal, every answer `normal`
    let mut m = Classifier::from_layers(small_layers(3), ClassSet::three(), 2);
    let w = m.store.id("net.3.weight").unwrap();
    m.store.get_mut(w).data_mut().fill(0.0);
    let b = m.store.id("net.3.bias").unwrap();
    m.store.get_mut(b).data_mut().copy_from_slice(&[0.0, 0.0, 5.0]);
    let mut test = Vec::new();
    for (c, n) in [(LabelClass::Abnormal, 60), (LabelClass::NoStool, 40), (LabelClass::Normal, 60)] {
        test.extend((0..n).map(|i| flat(c, i, [90.0, 90.0, 90.0])));
    }
    let e = evaluate(&m, &test).unwrap();
    assert_eq!(e.accuracy, 0.375);
    assert_eq!(e.confusion.total(), 160);
    assert_eq!(e.confusion.row_sums(), vec![60, 40, 60]);
    assert_eq!(e.confusion.counts[2], vec![0, 0, 60]);
    // cross-entropy of the two wrong classes at logit gap 5
    let p_wrong = 1.0 / (2.0 + 5f64.exp());
    let p_right = 5f64.exp() / (2.0 + 5f64.exp());
    let want = (100.0 * -p_wrong.ln() + 60.0 * -p_right.ln()) / 160.0;
    assert!((e.loss - want).abs() < 1e-4, "{} vs {want}", e.loss);
    assert!(e.confusion.to_csv().starts_with("true\\predicted,abnormal,no_stool,normal\n"));
}

#[test]
fn separable_toy_is_learned_and_training_is_deterministic() {
    let colours = [[200.0, 40.0, 40.0], [40.0, 200.0, 40.0], [40.0, 40.0, 200.0]];
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (c, rgb) in LabelClass::ALL.iter().zip(colours) {
        train.extend((0..12).map(|i| flat(*c, i, rgb)));
        val.extend((12..15).map(|i| flat(*c, i, rgb)));
    }
    let cfg = ClassifierConfig {
        learning_rate: 3e-3,
        ..desk_config(12)
    };
    let a = train_fold(&train, &val, &cfg, 0).unwrap();
    let b = train_fold(&train, &val, &cfg, 0).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.model.model.fingerprint(), b.model.model.fingerprint());
    let e = evaluate(&a.model.model, &val).unwrap();
    assert_eq!(e.accuracy, 1.0, "{:?}", a.log);
    let best = a.log.iter().map(|l| l.val_loss).fold(f32::INFINITY, f32::min);
    assert_eq!(a.model.best_val_loss, best);
    assert_eq!(a.log[a.model.best_epoch - 1].val_loss, best);
}

#[test]
fn validation_must_be_real_and_disjoint() {
    let t: Vec<ImageSample> = (0..4).map(|i| flat(LabelClass::Normal, i, [1.0; 3])).collect();
    let cfg = desk_config(1);
    assert!(matches!(train_fold(&t, &t[..1], &cfg, 0), Err(Error::InvalidInput(_))));
    let mut fake = flat(LabelClass::Normal, 9, [1.0; 3]);
    fake.source = Source::Gan;
    assert!(matches!(train_fold(&t, &[fake], &cfg, 0), Err(Error::InvalidInput(_))));
    let bad = ClassifierConfig { epochs: 0, ..cfg };
    assert!(matches!(train_fold(&t, &t[..1], &bad, 0), Err(Error::Config(_))));
}

#[test]
fn container_round_trip_preserves_predictions() {
    let m = Classifier::from_layers(Architecture::desk().layers(3).unwrap(), ClassSet::three(), 4);
    let c = m.to_container(serde_json::json!({"note": "x"}));
    let back = Classifier::from_container(&gutcheck_nn::Container::from_bytes(&c.to_bytes()).unwrap()).unwrap();
    let img = planted_dataset(&[LabelClass::Abnormal], 2, 1, &PlantedConfig::default());
    let refs: Vec<&Pixels> = img.iter().map(|s| &s.pixels).collect();
    assert_eq!(m.logits(&refs), back.logits(&refs));
    assert_eq!(m.fingerprint(), back.fingerprint());
}

#[test]
fn fold_training_set_mixes_in_generated_images() {
    let data = planted_dataset(&LabelClass::ALL, 10, 3, &PlantedConfig::default());
    let m = in_memory_manifest(&data).unwrap();
    let tc: BTreeMap<_, _> = LabelClass::ALL.iter().map(|&c| (c, 2)).collect();
    let plan = make_split(&m, &tc, 4, 1).unwrap();
    let mut gcfg = GanConfig::new(Backend::Cgan);
    gcfg.resolution = 32;
    gcfg.width = 4;
    let (state, _, _) = GeneratorState::init(&gcfg).unwrap();
    let sources: GanSources = LabelClass::ALL.iter().map(|&c| (c, state.clone())).collect();
    let cfg = ClassifierConfig {
        k: 4,
        gan_images_per_class: 5,
        ..desk_config(1)
    };
    let fd = assemble_fold_training_set(&data, &plan, 2, &cfg, Some(&sources)).unwrap();
    assert_eq!(fd.val.len(), plan.folds[2].len());
    assert_eq!(fd.train.len(), plan.train_ids(2).len() + 15);
    let gan: Vec<&ImageSample> = fd.train.iter().filter(|s| s.source == Source::Gan).collect();
    assert_eq!(gan.len(), 15);
    for c in LabelClass::ALL {
        assert_eq!(gan.iter().filter(|s| s.label == c).count(), 5);
    }
    assert!(fd.val.iter().all(|s| s.source == Source::Real));
    assert!(fd.train.iter().all(|s| !plan.test_ids.contains(&s.id)));
    let again = assemble_fold_training_set(&data, &plan, 2, &cfg, Some(&sources)).unwrap();
    assert_eq!(again.train, fd.train);
    let other = assemble_fold_training_set(&data, &plan, 1, &cfg, Some(&sources)).unwrap();
    let g1: Vec<_> = other.train.iter().filter(|s| s.source == Source::Gan).collect();
    assert_ne!(g1[0].pixels, gan[0].pixels);
    assert!(matches!(
        assemble_fold_training_set(&data, &plan, 4, &cfg, Some(&sources)),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn cross_validation_aggregates_folds() {
    let data = planted_dataset(&LabelClass::ALL, 6, 5, &PlantedConfig::default());
    let m = in_memory_manifest(&data).unwrap();
    let tc: BTreeMap<_, _> = LabelClass::ALL.iter().map(|&c| (c, 2)).collect();
    let plan = make_split(&m, &tc, 2, 1).unwrap();
    let cfg = ClassifierConfig { k: 2, ..desk_config(1) };
    let cv = cross_validate(&data, &plan, &cfg, None).unwrap();
    assert_eq!(cv.folds.len(), 2);
    assert!(!cv.gan_used);
    let accs: Vec<f64> = cv.folds.iter().map(|f| f.test_accuracy).collect();
    assert_eq!((cv.mean_test_accuracy, cv.std_test_accuracy), mean_std(&accs));
    assert_eq!(cv.best_accuracy, accs.iter().cloned().fold(0.0, f64::max));
    for f in &cv.folds {
        assert_eq!(f.confusion.total(), 6);
        assert_eq!(f.train_size + f.val_size, 12);
        assert_eq!(f.gan_images, 0);
    }
    let mismatched = ClassifierConfig { k: 3, ..cfg };
    assert!(matches!(cross_validate(&data, &plan, &mismatched, None), Err(Error::Config(_))));
}
