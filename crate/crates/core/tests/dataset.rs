use std::collections::BTreeMap;
use std::fs;

use gutcheck_core::synth::in_memory_manifest;
use gutcheck_core::*;
use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

fn write_png(path: &std::path::Path, img: &RgbImage) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    img.save(path).unwrap();
}

#[test]
fn counts_files_per_class_and_skips_undecodable() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let img = RgbImage::from_pixel(8, 8, Rgb([10, 20, 30]));
    for (class, n) in [("abnormal", 2), ("normal", 3), ("no_stool", 1)] {
        for i in 0..n {
            write_png(&root.join(class).join(format!("{i}.png")), &img);
        }
    }
    fs::write(root.join("normal/broken.jpg"), b"not a jpeg").unwrap();
    fs::write(root.join("normal/notes.txt"), b"ignored").unwrap();

    let m = load_dataset(root, &ClassSet::three()).unwrap();
    assert_eq!(m.len(), 6);
    assert_eq!(m.counts[&LabelClass::Abnormal], 2);
    assert_eq!(m.counts[&LabelClass::Normal], 3);
    assert_eq!(m.counts[&LabelClass::NoStool], 1);
    assert_eq!(m.warnings.len(), 1);
    assert!(m.warnings[0].contains("broken.jpg"));
    let ids: Vec<&str> = m.entries.iter().map(|e| e.id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert!(m.to_csv().unwrap().starts_with("id,path,label,width,height\n"));
}

#[test]
fn empty_root_names_missing_classes() {
    let dir = tempfile::tempdir().unwrap();
    match load_dataset(dir.path(), &ClassSet::three()) {
        Err(Error::Structure(msg)) => {
            for c in ["abnormal", "normal", "no_stool"] {
                assert!(msg.contains(c), "{msg}");
            }
        }
        other => panic!("expected a structural error, got {other:?}"),
    }
}

#[test]
fn two_class_load_ignores_no_stool_dir() {
    let dir = tempfile::tempdir().unwrap();
    let img = RgbImage::from_pixel(4, 4, Rgb([1, 2, 3]));
    write_png(&dir.path().join("abnormal/a.png"), &img);
    write_png(&dir.path().join("normal/b.png"), &img);
    let m = load_dataset(dir.path(), &ClassSet::two()).unwrap();
    assert_eq!(m.len(), 2);
}

#[test]
fn native_size_is_identity() {
    let img = ImageBuffer::from_fn(128, 128, |x, y| Rgb([x as u8, y as u8, (x * y % 251) as u8]));
    let p = standardize(&DynamicImage::ImageRgb8(img.clone())).unwrap();
    assert_eq!(p.to_rgb8(), img);
}

#[test]
fn constant_image_stays_constant() {
    let img = GrayImage::from_pixel(17, 31, Luma([200]));
    let p = standardize(&DynamicImage::ImageLuma8(img)).unwrap();
    assert_eq!((p.height, p.width), (128, 128));
    assert!(p.data.iter().all(|&v| v == 200.0));
}

#[test]
fn alpha_is_dropped() {
    let img = image::RgbaImage::from_pixel(128, 128, image::Rgba([9, 8, 7, 0]));
    let p = standardize(&DynamicImage::ImageRgba8(img)).unwrap();
    assert_eq!(&p.data[..3], &[9.0, 8.0, 7.0]);
}

#[test]
fn zero_dimension_is_rejected() {
    let img = DynamicImage::ImageRgb8(RgbImage::new(0, 5));
    assert!(matches!(standardize(&img), Err(Error::InvalidInput(_))));
}

#[test]
fn halving_matches_block_mean_oracle() {
    // Half-pixel bilinear at exactly 2x reduction samples midway between each
    // pixel pair, which is the mean of the 2x2 block.
    let img = ImageBuffer::from_fn(256, 256, |x, y| {
        let v = if (x / 8 + y / 8) % 2 == 0 { 255 } else { 0 };
        Rgb([v, (x % 200) as u8, (y % 150) as u8])
    });
    let p = standardize(&DynamicImage::ImageRgb8(img.clone())).unwrap();
    let mut in_mean = 0.0f64;
    for px in img.pixels() {
        in_mean += px.0.iter().map(|&v| v as f64).sum::<f64>();
    }
    in_mean /= 256.0 * 256.0 * 3.0;
    assert!((p.mean() - in_mean).abs() <= 1.0);
    for y in 0..128u32 {
        for x in 0..128u32 {
            for c in 0..3 {
                let block: f64 = [(0, 0), (1, 0), (0, 1), (1, 1)]
                    .iter()
                    .map(|&(dx, dy)| img.get_pixel(2 * x + dx, 2 * y + dy).0[c] as f64)
                    .sum::<f64>()
                    / 4.0;
                let got = p.get(y as usize, x as usize, c) as f64;
                assert!((got - block).abs() < 1e-3, "({y},{x},{c}) {got} vs {block}");
            }
        }
    }
}

#[test]
fn standardize_is_idempotent() {
    let p = Pixels::new(40, 70, (0..40 * 70 * 3).map(|i| ((i * 37) % 256) as f32).collect());
    let once = standardize_pixels(&p);
    assert_eq!(standardize_pixels(&once), once);
}

fn fake_corpus(counts: &[(LabelClass, usize)]) -> Vec<ImageSample> {
    let tiny = Pixels::filled(1, 1, [0.0; 3]);
    counts
        .iter()
        .flat_map(|&(label, n)| {
            let tiny = tiny.clone();
            (0..n).map(move |i| ImageSample {
                id: format!("{}/{i:05}.png", label.as_str()),
                label,
                source: Source::Real,
                pixels: tiny.clone(),
            })
        })
        .collect()
}

#[test]
fn small_split_arithmetic() {
    let data = fake_corpus(&[
        (LabelClass::Abnormal, 10),
        (LabelClass::Normal, 10),
        (LabelClass::NoStool, 10),
    ]);
    let m = in_memory_manifest(&data).unwrap();
    let tc: BTreeMap<_, _> = LabelClass::ALL.iter().map(|&c| (c, 2)).collect();
    let plan = make_split(&m, &tc, 4, 7).unwrap();
    assert_eq!(plan.test_ids.len(), 6);
    assert!(plan.folds.iter().all(|f| f.len() == 6));
    assert_eq!(plan.non_test_len(), 24);
}

#[test]
fn corpus_sized_split() {
    let data = fake_corpus(&[
        (LabelClass::Abnormal, 337),
        (LabelClass::Normal, 1038),
        (LabelClass::NoStool, 235),
    ]);
    let m = in_memory_manifest(&data).unwrap();
    assert_eq!(m.len(), 1610);
    let tc = BTreeMap::from([
        (LabelClass::Abnormal, 60),
        (LabelClass::Normal, 60),
        (LabelClass::NoStool, 40),
    ]);
    let plan = make_split(&m, &tc, 5, 2021).unwrap();
    assert_eq!(plan.test_ids.len(), 160);
    assert_eq!(plan.non_test_len(), 1450);
    assert!(plan.folds.iter().all(|f| f.len() == 290));
    let label = |id: &str| m.entry(id).unwrap().label;
    for (class, non_test) in [
        (LabelClass::Abnormal, 277),
        (LabelClass::Normal, 978),
        (LabelClass::NoStool, 195),
    ] {
        let tally: Vec<usize> = plan
            .folds
            .iter()
            .map(|f| f.iter().filter(|id| label(id) == class).count())
            .collect();
        assert_eq!(tally.iter().sum::<usize>(), non_test);
        assert!(tally.iter().max().unwrap() - tally.iter().min().unwrap() <= 1, "{class}: {tally:?}");
    }
    let json = serde_json::to_value(&plan).unwrap();
    for key in ["seed", "k", "test_ids", "folds"] {
        assert!(json.get(key).is_some());
    }
}

#[test]
fn oversized_test_request_names_the_class() {
    let data = fake_corpus(&[(LabelClass::Abnormal, 5), (LabelClass::Normal, 50)]);
    let m = in_memory_manifest(&data).unwrap();
    let tc = BTreeMap::from([(LabelClass::Abnormal, 3), (LabelClass::Normal, 3)]);
    match make_split(&m, &tc, 5, 0) {
        Err(Error::Capacity { class, .. }) => assert_eq!(class, LabelClass::Abnormal),
        other => panic!("expected a capacity error, got {other:?}"),
    }
}
