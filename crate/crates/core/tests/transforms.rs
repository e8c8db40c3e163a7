use biasaudit_core::transform::mix::{cutmix_with_box, mix_batch, mixup_with_lambda, smooth_one_hot, CutBox};
use biasaudit_core::transform::{apply_corruption, eval_transform, train_transform};
use biasaudit_core::{AugmentationLevel, AugmentationPolicy, CorruptionSpec, CounterRng, Geometry, Image};
use proptest::prelude::*;

/// Half-pixel-center bilinear resize in f64, written from the textbook
/// definition.
fn bilinear_oracle(src: &[f64], w: usize, h: usize, nw: usize, nh: usize) -> Vec<f64> {
    let tap = |o: usize, n_in: usize, n_out: usize| {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(n_in - 1), s - i0 as f64)
    };
    let mut out = vec![0.0; nw * nh];
    for oy in 0..nh {
        let (y0, y1, fy) = tap(oy, h, nh);
        for ox in 0..nw {
            let (x0, x1, fx) = tap(ox, w, nw);
            let at = |x: usize, y: usize| src[y * w + x];
            let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
            let bot = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
            out[oy * nw + ox] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

fn sample_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = CounterRng::new(seed);
    Image::from_fn(w, h, |_, _, _| rng.next_f32())
}

#[test]
fn blur_of_constant_is_identity() {
    let img = Image::filled(31, 17, [0.2, 0.5, 0.9]);
    for r in [1.0, 3.0, 5.0, 12.0] {
        let out = apply_corruption(&img, &CorruptionSpec::gaussian_blur(r), "x").unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-5, "radius {r}: {a} vs {b}");
        }
    }
}

#[test]
fn noise_std_on_mid_gray() {
    let img = Image::filled(600, 600, [0.5; 3]);
    let out = apply_corruption(&img, &CorruptionSpec::gaussian_noise(0.2), "gray").unwrap();
    let n = out.data().len() as f64;
    assert!(n >= 1e6);
    let mean = out.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = out.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    assert!((0.185..=0.205).contains(&std), "std {std}");
    assert!((mean - 0.5).abs() < 2e-3, "mean {mean}");
}

#[test]
fn low_resolution_matches_bilinear_oracle() {
    let ramp: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
    let img = Image::from_fn(4, 4, |_, x, y| ramp[y * 4 + x] as f32);
    let out = apply_corruption(&img, &CorruptionSpec::low_resolution(2.0), "ramp").unwrap();
    let small = bilinear_oracle(&ramp, 4, 4, 2, 2);
    let expected = bilinear_oracle(&small, 2, 2, 4, 4);
    for c in 0..3 {
        for (i, e) in expected.iter().enumerate() {
            let got = out.get(c, i % 4, i / 4) as f64;
            assert!((got - e).abs() < 1e-6, "pixel {i}: {got} vs {e}");
        }
    }
}

#[test]
fn mixup_lambda_one_is_identity() {
    let inputs: Vec<Image> = (0..4).map(|i| sample_image(8, 8, i)).collect();
    let targets: Vec<Vec<f32>> = (0..4).map(|i| smooth_one_hot(i % 3, 3, 0.1)).collect();
    let mixed = mixup_with_lambda(&inputs, &targets, 1.0);
    assert_eq!(mixed.inputs, inputs);
    assert_eq!(mixed.targets, targets);
}

#[test]
fn cutmix_pastes_exactly_the_box() {
    let a = Image::filled(8, 8, [0.0; 3]);
    let b = Image::filled(8, 8, [1.0; 3]);
    let bbox = CutBox { x0: 2, y0: 1, x1: 5, y1: 7 };
    let mixed = cutmix_with_box(&[a, b], &[vec![1.0, 0.0], vec![0.0, 1.0]], bbox);
    let pasted = mixed.inputs[0].data().iter().filter(|&&v| v == 1.0).count();
    assert_eq!(pasted, 3 * 6 * 3);
    let partner = 18.0 / 64.0;
    assert!((mixed.targets[0][1] - partner).abs() < 1e-6);
    assert!((mixed.targets[0][0] - (1.0 - partner)).abs() < 1e-6);
}

#[test]
fn eval_transform_is_pure() {
    let img = sample_image(70, 50, 9);
    let before = img.clone();
    let g = Geometry::scaled(32);
    let a = eval_transform(&img, &g);
    let b = eval_transform(&img, &g);
    assert_eq!(img, before);
    assert_eq!(a, b);
    assert_eq!((a.width(), a.height()), (32, 32));
}

#[test]
fn corruption_is_keyed_by_image_id() {
    let img = sample_image(40, 40, 1);
    for spec in [CorruptionSpec::gaussian_noise(0.2), CorruptionSpec::color_jitter(1.0)] {
        let a = apply_corruption(&img, &spec, "a.jpg").unwrap();
        assert_eq!(a, apply_corruption(&img, &spec, "a.jpg").unwrap());
        assert_ne!(a, apply_corruption(&img, &spec, "b.jpg").unwrap());
        assert_ne!(a, apply_corruption(&img, &spec.with_seed_base(1), "a.jpg").unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn soft_labels_sum_to_one(seed: u64, n in 2usize..8, classes in 2usize..12, level in 0usize..4) {
        let policy = AugmentationPolicy::new(AugmentationLevel::ALL[level]);
        let inputs: Vec<Image> = (0..n).map(|i| sample_image(6, 6, seed ^ i as u64)).collect();
        let labels: Vec<usize> = (0..n).map(|i| (i * 7 + seed as usize) % classes).collect();
        let mixed = mix_batch(&inputs, &labels, classes, &policy, &mut CounterRng::new(seed)).unwrap();
        for row in &mixed.targets {
            let sum: f32 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6, "sum {}", sum);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn corruptions_keep_shape_and_range(seed: u64, kind in 0usize..5, p in 0.1f32..4.0) {
        let img = sample_image(23, 17, seed);
        let spec = match kind {
            0 => CorruptionSpec::none(),
            1 => CorruptionSpec::color_jitter(p),
            2 => CorruptionSpec::gaussian_noise(p / 4.0),
            3 => CorruptionSpec::gaussian_blur(p * 2.0),
            _ => CorruptionSpec::low_resolution(p * 4.0),
        };
        let out = apply_corruption(&img, &spec, "id").unwrap();
        prop_assert_eq!((out.width(), out.height()), (23, 17));
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn train_transform_replays_from_rng(seed: u64, level in 0usize..4) {
        let img = sample_image(48, 40, seed);
        let policy = AugmentationPolicy::new(AugmentationLevel::ALL[level]);
        let g = Geometry::scaled(24);
        let a = train_transform(&img, &policy, &g, &mut CounterRng::new(seed));
        let b = train_transform(&img, &policy, &g, &mut CounterRng::new(seed));
        prop_assert_eq!((a.width(), a.height()), (24, 24));
        prop_assert_eq!(a, b);
    }
}
