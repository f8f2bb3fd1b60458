//! Synthetic image sets with known structure, used by tests and benchmarks.

use gutcheck_nn::stream;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{DatasetManifest, ImageSample, ManifestEntry, Source};
use crate::Error;
use crate::label::LabelClass;
use crate::pixels::{Pixels, SIDE};

const BROWN: [f32; 3] = [120.0, 78.0, 40.0];
const RED: [f32; 3] = [175.0, 35.0, 35.0];

/// Parameters of the planted-feature task.
///
/// The class is decided only by a blob near the image centre: a reddish blob
/// for `abnormal`, a brownish one for `normal` and none for `no_stool`. The
/// red/brown mixing ranges of the two blob classes overlap slightly, and
/// blobs are scattered along the borders of every image regardless of class.
/// By default the border blobs span the whole palette, so colour alone does
/// not give the class away.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    /// Mixing weight towards red for abnormal blobs.
    pub abnormal_mix: (f32, f32),
    /// Mixing weight towards red for normal blobs.
    pub normal_mix: (f32, f32),
    pub noise_std: f32,
    /// Maximum displacement of the central blob from the image centre, in pixels.
    pub jitter: f32,
    pub radius: (f32, f32),
    pub distractors: (usize, usize),
    /// Red/brown mixing range of the border blobs.
    pub distractor_mix: (f32, f32),
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            abnormal_mix: (0.4, 1.0),
            normal_mix: (0.0, 0.6),
            noise_std: 18.0,
            jitter: 10.0,
            radius: (12.0, 20.0),
            distractors: (2, 5),
            distractor_mix: (0.0, 1.0),
        }
    }
}

fn lerp(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn paint_disc(img: &mut Pixels, cx: f32, cy: f32, r: f32, rgb: [f32; 3]) {
    let (y0, y1) = ((cy - r - 1.0).max(0.0) as usize, ((cy + r + 1.0) as usize).min(img.height - 1));
    let (x0, x1) = ((cx - r - 1.0).max(0.0) as usize, ((cx + r + 1.0) as usize).min(img.width - 1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
            // one pixel of soft edge
            let a = (r + 0.5 - d).clamp(0.0, 1.0);
            if a > 0.0 {
                for (c, &v) in rgb.iter().enumerate() {
                    let old = img.get(y, x, c);
                    img.set(y, x, c, old * (1.0 - a) + v * a);
                }
            }
        }
    }
}

/// One 128×128 planted-feature image; fully determined by `(class, seed)`.
pub fn planted_image(class: LabelClass, seed: u64, cfg: &PlantedConfig) -> Pixels {
    let mut rng = stream(&[seed, 0x91a7, class as u64]);
    let n = SIDE as f32;
    let base = [
        rng.random_range(200.0..235.0),
        rng.random_range(195.0..225.0),
        rng.random_range(180.0..215.0),
    ];
    let (gx, gy) = (rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0));
    let mut img = Pixels::filled(SIDE, SIDE, [0.0; 3]);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let shade = gx * (x as f32 / n - 0.5) + gy * (y as f32 / n - 0.5);
            for (c, &b) in base.iter().enumerate() {
                img.set(y, x, c, b + shade);
            }
        }
    }
    let n_distract = rng.random_range(cfg.distractors.0..=cfg.distractors.1);
    for _ in 0..n_distract {
        let r = rng.random_range(6.0..14.0);
        // a point in the outer ring, outside the central half-width square
        let (cx, cy) = loop {
            let p = (rng.random_range(r..n - r), rng.random_range(r..n - r));
            let inner = |v: f32| (v - n / 2.0).abs() < n / 4.0 + r;
            if !(inner(p.0) && inner(p.1)) {
                break p;
            }
        };
        let (lo, hi) = cfg.distractor_mix;
        let colour = lerp(BROWN, RED, if hi > lo { rng.random_range(lo..hi) } else { lo });
        paint_disc(&mut img, cx, cy, r, colour);
    }
    let mix = match class {
        LabelClass::Abnormal => Some(cfg.abnormal_mix),
        LabelClass::Normal => Some(cfg.normal_mix),
        LabelClass::NoStool => None,
    };
    if let Some((lo, hi)) = mix {
        let t = rng.random_range(lo..=hi);
        let r = rng.random_range(cfg.radius.0..=cfg.radius.1);
        let cx = n / 2.0 + rng.random_range(-cfg.jitter..=cfg.jitter);
        let cy = n / 2.0 + rng.random_range(-cfg.jitter..=cfg.jitter);
        paint_disc(&mut img, cx, cy, r, lerp(BROWN, RED, t));
    }
    let noise = Normal::new(0.0, cfg.noise_std).expect("valid std");
    for v in &mut img.data {
        *v = (*v + noise.sample(&mut rng)).clamp(0.0, 255.0);
    }
    img
}

/// `per_class` planted-feature samples for each class, ids `<class>/synth_<seed>_<i>`.
pub fn planted_dataset(classes: &[LabelClass], per_class: usize, seed: u64, cfg: &PlantedConfig) -> Vec<ImageSample> {
    let mut out = Vec::with_capacity(classes.len() * per_class);
    for &class in classes {
        for i in 0..per_class {
            let s = gutcheck_nn::derive_seed(&[seed, class as u64, i as u64]);
            out.push(ImageSample {
                id: format!("{}/synth_{seed}_{i:04}", class.as_str()),
                label: class,
                source: Source::Real,
                pixels: planted_image(class, s, cfg),
            });
        }
    }
    out
}

/// Manifest over in-memory samples, so they can be split like a folder on disk.
/// Paths are the sample ids.
pub fn in_memory_manifest(samples: &[ImageSample]) -> Result<DatasetManifest, Error> {
    let entries = samples
        .iter()
        .map(|s| ManifestEntry {
            id: s.id.clone(),
            path: s.id.clone().into(),
            label: s.label,
            width: s.pixels.width as u32,
            height: s.pixels.height as u32,
        })
        .collect();
    DatasetManifest::from_entries("", entries)
}

/// Red squares (even `mode`) or blue discs (odd `mode`) on a dark background.
pub fn two_mode_image(mode: usize, seed: u64) -> Pixels {
    let mut rng = stream(&[seed, 0x2d0d, mode as u64]);
    let n = SIDE as f32;
    let mut img = Pixels::filled(SIDE, SIDE, [20.0, 20.0, 30.0]);
    let half = rng.random_range(18.0..30.0);
    let cx = rng.random_range(half + 4.0..n - half - 4.0);
    let cy = rng.random_range(half + 4.0..n - half - 4.0);
    if mode % 2 == 0 {
        let colour = [rng.random_range(200.0..250.0), rng.random_range(20.0..60.0), 30.0];
        for y in (cy - half) as usize..(cy + half) as usize {
            for x in (cx - half) as usize..(cx + half) as usize {
                for (c, &v) in colour.iter().enumerate() {
                    img.set(y, x, c, v);
                }
            }
        }
    } else {
        let colour = [30.0, rng.random_range(60.0..120.0), rng.random_range(200.0..250.0)];
        paint_disc(&mut img, cx, cy, half, colour);
    }
    img
}

/// `n` images alternating between the two modes.
pub fn two_mode_dataset(n: usize, seed: u64) -> Vec<ImageSample> {
    (0..n)
        .map(|i| ImageSample {
            id: format!("toy/{i:04}"),
            label: LabelClass::Normal,
            source: Source::Real,
            pixels: two_mode_image(i, gutcheck_nn::derive_seed(&[seed, i as u64])),
        })
        .collect()
}
