use gutcheck_core::augment::*;
use gutcheck_core::Pixels;
use gutcheck_nn::{stream, Graph, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn ramp(h: usize, w: usize) -> Pixels {
    Pixels::new(h, w, (0..h * w * 3).map(|i| ((i * 31 + 7) % 251) as f32).collect())
}

#[test]
fn identity_policy_is_identity() {
    let img = ramp(128, 128);
    for seed in 0..5 {
        assert_eq!(classic_augment(&img, &ClassicPolicy::identity(), seed).unwrap(), img);
    }
}

#[test]
fn horizontal_flip_is_an_involution() {
    let policy = ClassicPolicy {
        hflip: true,
        ..ClassicPolicy::identity()
    };
    let img = ramp(128, 128);
    let mut flipped_once = false;
    for seed in 0..20 {
        let draw = policy.draw(128, 128, seed);
        let once = draw.apply(&img);
        if draw.hflip {
            flipped_once = true;
            assert_ne!(once, img);
            assert_eq!(once.get(5, 0, 1), img.get(5, 127, 1));
        }
        assert_eq!(draw.apply(&once), img);
    }
    assert!(flipped_once);
}

#[test]
fn invalid_policy_is_rejected() {
    let img = ramp(8, 8);
    let bad = ClassicPolicy {
        shift_frac: 1.0,
        ..ClassicPolicy::identity()
    };
    assert!(classic_augment(&img, &bad, 0).is_err());
    let bad = ClassicPolicy {
        rotation_deg: -1.0,
        ..ClassicPolicy::identity()
    };
    assert!(classic_augment(&img, &bad, 0).is_err());
}

/// Where an independent forward warp sends point `(x, y)`: flip, rotate by
/// `+angle` about the centre (image coordinates, y down), then translate.
fn forward_map(d: &ClassicDraw, x: f64, y: f64, n: f64) -> (f64, f64) {
    let c = (n - 1.0) / 2.0;
    let x = if d.hflip { n - 1.0 - x } else { x };
    let y = if d.vflip { n - 1.0 - y } else { y };
    let (s, co) = (d.angle_deg as f64).to_radians().sin_cos();
    let (dx, dy) = (x - c, y - c);
    (co * dx - s * dy + c + d.shift_x as f64, s * dx + co * dy + c + d.shift_y as f64)
}

fn centroid(p: &Pixels) -> (f64, f64) {
    let (mut sx, mut sy, mut m) = (0.0, 0.0, 0.0);
    for y in 0..p.height {
        for x in 0..p.width {
            let v = p.get(y, x, 0) as f64;
            sx += v * x as f64;
            sy += v * y as f64;
            m += v;
        }
    }
    (sx / m, sy / m)
}

#[test]
fn shift_matches_reference_warp_on_a_delta() {
    let n = 128;
    let (px, py) = (70.0, 50.0);
    let mut delta = Pixels::filled(n, n, [0.0; 3]);
    delta.set(py as usize, px as usize, 0, 255.0);
    let shift_only = ClassicPolicy {
        shift_frac: 0.1,
        ..ClassicPolicy::identity()
    };
    let full = ClassicPolicy {
        vflip: true,
        ..ClassicPolicy::default()
    };
    for seed in 0..40 {
        for policy in [&shift_only, &full] {
            let d = policy.draw(n, n, seed);
            assert!(d.shift_x.abs() <= 12.8 && d.shift_y.abs() <= 12.8);
            assert!(d.angle_deg.abs() <= policy.rotation_deg);
            let out = d.apply(&delta);
            let (ex, ey) = forward_map(&d, px, py, n as f64);
            let (cx, cy) = centroid(&out);
            assert!(
                (cx - ex).abs() < 0.25 && (cy - ey).abs() < 0.25,
                "seed {seed}: centroid ({cx:.3},{cy:.3}) expected ({ex:.3},{ey:.3})"
            );
        }
    }
}

#[test]
fn out_of_frame_takes_nearest_edge() {
    let mut img = Pixels::filled(16, 16, [0.0; 3]);
    for y in 0..16 {
        img.set(y, 0, 0, 200.0);
    }
    let d = ClassicDraw {
        shift_x: 4.0,
        ..ClassicDraw::identity()
    };
    let out = d.apply(&img);
    for x in 0..5 {
        assert_eq!(out.get(8, x, 0), 200.0);
    }
    assert_eq!(out.get(8, 5, 0), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classic_output_stays_in_range(seed in any::<u64>(), rot in 0.0f32..45.0, shift in 0.0f32..0.5) {
        let mut rng = stream(&[seed]);
        let img = Pixels::new(24, 20, (0..24 * 20 * 3).map(|_| rng.random_range(0.0..=255.0)).collect());
        let policy = ClassicPolicy { rotation_deg: rot, shift_frac: shift, hflip: true, vflip: true };
        let out = classic_augment(&img, &policy, seed).unwrap();
        prop_assert_eq!((out.height, out.width), (24, 20));
        prop_assert!(out.data.iter().all(|v| (0.0..=255.0).contains(v)));
    }

    #[test]
    fn diff_augment_preserves_shape_and_finiteness(seed in any::<u64>(), n in 1usize..4, side in 4usize..20) {
        let mut rng = stream(&[seed, 1]);
        let x = Tensor::new(&[n, 3, side, side + 1], (0..n * 3 * side * (side + 1)).map(|_| rng.random_range(-1.0..1.0)).collect());
        let y = diff_augment_tensor(&x, &DiffAugmentPolicy::default(), seed).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
        prop_assert!(y.all_finite());
    }
}

fn random_batch(n: usize, h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = stream(&[seed, 0xba7]);
    Tensor::new(&[n, 3, h, w], (0..n * 3 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
}

#[test]
fn neutral_policy_is_identity() {
    let x = random_batch(3, 16, 16, 1);
    let policy = DiffAugmentPolicy {
        translation_frac: 0.0,
        cutout_frac: 0.0,
        brightness: 0.0,
        saturation: 0.0,
        contrast: 0.0,
        ..Default::default()
    };
    assert_eq!(diff_augment_tensor(&x, &policy, 9).unwrap(), x);
    let empty = DiffAugmentPolicy::parse("").unwrap();
    assert_eq!(diff_augment_tensor(&x, &empty, 9).unwrap(), x);
}

#[test]
fn cutout_zeroes_exactly_one_square() {
    let policy = DiffAugmentPolicy::parse("cutout").unwrap();
    // strictly non-zero input so every zero comes from the mask
    let x = Tensor::new(&[4, 3, 64, 64], (0..4 * 3 * 64 * 64).map(|i| 0.1 + (i % 7) as f32 * 0.1).collect());
    let y = diff_augment_tensor(&x, &policy, 3).unwrap();
    for s in 0..4 {
        let d = policy.draw(3, s, 64, 64);
        for c in 0..3 {
            let mut zeros = 0;
            for yy in 0..64 {
                for xx in 0..64 {
                    let i = ((s * 3 + c) * 64 + yy) * 64 + xx;
                    let inside = (d.cutout_y..d.cutout_y + 32).contains(&yy) && (d.cutout_x..d.cutout_x + 32).contains(&xx);
                    if inside {
                        assert_eq!(y.data()[i], 0.0);
                        zeros += 1;
                    } else {
                        assert_eq!(y.data()[i], x.data()[i]);
                    }
                }
            }
            assert_eq!(zeros, 32 * 32);
        }
    }
}

#[test]
fn same_seed_same_transform_for_real_and_fake() {
    let policy = DiffAugmentPolicy::default();
    let real = random_batch(4, 16, 16, 2);
    let fake = random_batch(4, 16, 16, 3);
    let a = diff_augment_tensor(&real, &policy, 77).unwrap();
    let b = diff_augment_tensor(&fake, &policy, 77).unwrap();
    // every transform is affine in the input, so the difference of outputs
    // is the same transform's linear part applied to the difference
    let diff = Tensor::new(real.shape(), real.data().iter().zip(fake.data()).map(|(r, f)| r - f).collect());
    let lin = {
        let zero = Tensor::zeros(real.shape());
        let t0 = diff_augment_tensor(&zero, &policy, 77).unwrap();
        let td = diff_augment_tensor(&diff, &policy, 77).unwrap();
        td.data().iter().zip(t0.data()).map(|(x, z)| x - z).collect::<Vec<_>>()
    };
    for ((x, y), l) in a.data().iter().zip(b.data()).zip(&lin) {
        assert!((x - y - l).abs() < 1e-4);
    }
    assert_ne!(a, diff_augment_tensor(&real, &policy, 78).unwrap());
}

#[test]
fn non_finite_input_is_rejected() {
    let mut x = random_batch(1, 8, 8, 4);
    x.data_mut()[5] = f32::NAN;
    assert!(diff_augment_tensor(&x, &DiffAugmentPolicy::default(), 0).is_err());
}

/// `L = Σ r ⊙ diff_augment(x)` against central differences at 10 random pixels.
#[test]
fn gradient_matches_finite_differences() {
    let (n, h, w) = (2, 16, 16);
    let eps = 0.05f32;
    for (pi, list) in ["color", "translation", "cutout", "color,translation,cutout"].iter().enumerate() {
        let policy = DiffAugmentPolicy::parse(list).unwrap();
        let x = random_batch(n, h, w, 10 + pi as u64);
        let r = random_batch(n, h, w, 20 + pi as u64);
        let seed = 5 + pi as u64;
        let weighted = |t: &Tensor| -> Vec<f64> {
            t.data().iter().zip(r.data()).map(|(&a, &b)| a as f64 * b as f64).collect()
        };

        let mut g = Graph::new();
        let xv = g.variable(x.clone());
        let y = diff_augment(&mut g, xv, &policy, seed).unwrap();
        let rv = g.constant(r.clone());
        let prod = g.mul(y, rv);
        let loss = g.sum(prod);
        let grad = g.backward(loss).get(xv).unwrap().clone();

        let mut rng = stream(&[pi as u64, 0xfd]);
        for _ in 0..10 {
            let i = rng.random_range(0..x.len());
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += eps;
            xm.data_mut()[i] -= eps;
            let yp = weighted(&diff_augment_tensor(&xp, &policy, seed).unwrap());
            let ym = weighted(&diff_augment_tensor(&xm, &policy, seed).unwrap());
            // element-wise differences first, to keep cancellation error small
            let fd: f64 = yp.iter().zip(&ym).map(|(a, b)| a - b).sum::<f64>() / (2.0 * eps as f64);
            let an = grad.data()[i] as f64;
            // relative error, measured against unit scale for near-zero gradients
            let err = (fd - an).abs() / an.abs().max(1.0);
            assert!(err < 1e-3, "{list}: pixel {i} analytic {an} numeric {fd}");
        }
    }
}
