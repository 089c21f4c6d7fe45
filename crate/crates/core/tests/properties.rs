use std::collections::BTreeSet;

use anonrev::anonymizers::{
    block_permute, build_background_db, dp_snow, dp_snow_positions, gaussian_blur, k_same_pixel, pixel_relocate,
    AnonymizerContext, AnonymizerSpec, Method, OverlaySet, SNOW_GRAY,
};
use anonrev::dataio::{split_dataset, ImageKey, LabeledImage, SplitParams};
use anonrev::deanon::{
    apply_permutation, interpolate_gray, is_snow_gray, learn_permutation, richardson_lucy, wiener_deconv, DeconvParams,
    ImagePair, PermutationMap,
};
use anonrev::metrics::{reversibility, ssim, SsimConfig};
use anonrev::neural::{ae_forward, ae_init, decode_checkpoint, encode_checkpoint, AeHyperparams};
use anonrev::{Error, ImageTensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(h: usize, w: usize, seed: u64) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageTensor::from_fn(h, w, |_, _, _| rng.random::<f64>())
        .unwrap()
        .quantized()
}

fn labeled(seed: u64, identity: usize, image: usize) -> LabeledImage {
    LabeledImage::new(
        random_image(16, 16, seed),
        format!("id{identity}"),
        format!("img{image}"),
    )
}

fn sorted(img: &ImageTensor) -> Vec<u64> {
    let mut v: Vec<u64> = img.data().iter().map(|x| x.to_bits()).collect();
    v.sort_unstable();
    v
}

fn any_method() -> impl Strategy<Value = Method> {
    prop_oneof![
        Just(Method::Identity),
        Just(Method::EyeMask),
        (1usize..=8).prop_map(|b| Method::BlockPermute { block_size: b }),
        (1usize..=60).prop_map(|s| Method::PixelRelocate { steps: s }),
        (0.0f64..300.0).prop_map(|s| Method::GaussianNoise { sigma: s }),
        (1usize..=7).prop_map(|k| Method::GaussianBlur { kernel: 2 * k + 1 }),
        (1usize..=8).prop_map(|s| Method::Pixelate { size: s }),
        (1usize..=3).prop_map(|k| Method::KRtio { overlays: k }),
        (0.5f64..50.0, 1usize..=8).prop_map(|(e, m)| Method::DpPix { epsilon: e, b: 12.0, m }),
        (0.0f64..=1.0).prop_map(|d| Method::DpSnow { delta: d }),
        (1.0f64..50.0, 2usize..12).prop_map(|(e, k)| Method::DpSamp { epsilon: e, k, m: 12.0 }),
        (2usize..=4).prop_map(|k| Method::KSamePixel { k }),
        (2usize..=4).prop_map(|k| Method::KSameEigen { k }),
    ]
}

fn context() -> AnonymizerContext {
    let background: Vec<LabeledImage> = (0..5).map(|i| labeled(900 + i as u64, 100 + i, 0)).collect();
    AnonymizerContext {
        background: Some(build_background_db(&background, 4).unwrap()),
        overlays: Some(OverlaySet::new(background.iter().map(|b| b.image.clone()).collect()).unwrap()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn anonymizers_keep_shape_and_range(method in any_method(), seed in any::<u64>(), key in any::<u64>()) {
        let img = labeled(seed, 0, 0);
        let samp = matches!(method, Method::DpSamp { .. });
        let spec = AnonymizerSpec::new(method).with_key(key).with_noise_seed(seed ^ 1);
        let ctx = context();
        let out = match spec.apply(&img, &ctx) {
            // uniform noise can leave no pixel near any cluster center
            Err(Error::InsufficientData(_)) if samp => return Ok(()),
            other => other.unwrap(),
        };
        prop_assert!(out.same_shape(&img.image));
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        // determinism given spec, seeds and image id
        prop_assert_eq!(&out, &spec.apply(&img, &ctx).unwrap());
    }

    #[test]
    fn permutations_preserve_pixel_multiset(seed in any::<u64>(), key in any::<u64>(), block in 1usize..=8, steps in 1usize..=60) {
        let img = random_image(16, 24, seed);
        prop_assert_eq!(sorted(&block_permute(&img, block, key).unwrap()), sorted(&img));
        prop_assert_eq!(sorted(&pixel_relocate(&img, steps, key).unwrap()), sorted(&img));
    }

    #[test]
    fn learned_permutation_inverts_held_out_images(key in any::<u64>(), seed in any::<u64>(), relocate in any::<bool>()) {
        let anonymize = |img: &ImageTensor| if relocate {
            pixel_relocate(img, 50, key).unwrap()
        } else {
            block_permute(img, 4, key).unwrap()
        };
        let pairs: Vec<ImagePair> = (0..3)
            .map(|i| {
                let clear = random_image(16, 16, seed.wrapping_add(i));
                let anon = anonymize(&clear);
                (clear, anon)
            })
            .collect();
        let map = learn_permutation(&pairs).unwrap();
        let held_out = random_image(16, 16, seed.wrapping_add(1000));
        prop_assert_eq!(apply_permutation(&map, &anonymize(&held_out)).unwrap(), held_out);
    }

    #[test]
    fn permutation_map_json_round_trip(seed in any::<u64>()) {
        let mut idx: Vec<usize> = (0..64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..64).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let map = PermutationMap::from_indices(8, 8, idx).unwrap();
        let back = PermutationMap::from_json(8, 8, &map.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.mapping, map.mapping);
    }

    #[test]
    fn interpolation_never_touches_known_pixels(seed in any::<u64>(), delta in 0.0f64..0.9) {
        let img = ImageTensor::from_fn(16, 16, |y, x, c| {
            let v = 0.1 + 0.8 * ((y * 16 + x + c) % 13) as f64 / 13.0;
            if (v * 255.0).round() == 127.0 { 0.2 } else { v }
        })
        .unwrap()
        .quantized();
        let snowed = dp_snow(&img, delta, seed).unwrap();
        prop_assert_eq!(dp_snow_positions(16, 16, delta, seed).unwrap().len(), (delta * 256.0).round() as usize);
        let out = interpolate_gray(&snowed).unwrap();
        for i in 0..256 {
            if !is_snow_gray(snowed.pixel(i)) {
                prop_assert_eq!(out.pixel(i), snowed.pixel(i));
            } else {
                prop_assert!(snowed.pixel(i) == [SNOW_GRAY; 3]);
            }
        }
    }

    #[test]
    fn deconvolution_keeps_shape_and_range(seed in any::<u64>(), psf in 0.5f64..4.0, balance in 1e-4f64..0.1, iterations in 1usize..20) {
        let img = gaussian_blur(&random_image(16, 16, seed), 7).unwrap();
        let params = DeconvParams { psf_sigma: psf, balance, iterations };
        for out in [wiener_deconv(&img, &params).unwrap(), richardson_lucy(&img, &params).unwrap()] {
            prop_assert!(out.same_shape(&img));
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn ssim_is_bounded_and_symmetric(a in any::<u64>(), b in any::<u64>()) {
        let cfg = SsimConfig::default();
        let (x, y) = (random_image(16, 16, a), random_image(16, 16, b));
        let s = ssim(&x, &y, &cfg).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((s - ssim(&y, &x, &cfg).unwrap()).abs() < 1e-12);
        prop_assert!((ssim(&x, &x, &cfg).unwrap() - 1.0).abs() < 1e-12);
        if x != y {
            prop_assert!(s < 1.0);
        }
    }

    #[test]
    fn ssim_with_unit_window_ignores_pixel_order(a in any::<u64>(), b in any::<u64>(), key in any::<u64>()) {
        let cfg = SsimConfig { window: 1, ..SsimConfig::default() };
        let (x, y) = (random_image(16, 16, a), random_image(16, 16, b));
        let (px, py) = (pixel_relocate(&x, 1, key).unwrap(), pixel_relocate(&y, 1, key).unwrap());
        prop_assert!((ssim(&x, &y, &cfg).unwrap() - ssim(&px, &py, &cfg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn reversibility_is_monotone_in_deanon(clear in 0.5f64..=1.0, naive in 0.0f64..0.5, d1 in 0.0f64..=1.0, d2 in 0.0f64..=1.0) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let a = reversibility(clear, naive, lo).unwrap().value;
        let b = reversibility(clear, naive, hi).unwrap().value;
        prop_assert!(a <= b);
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
    }

    #[test]
    fn split_partitions_identities(seed in any::<u64>(), ids in 6usize..30, per in 2usize..8, bg in 0usize..3, test in 1usize..3) {
        let keys: Vec<ImageKey> = (0..ids)
            .flat_map(|i| (0..per).map(move |j| ImageKey::new(format!("id{i}"), format!("img{j}"))))
            .collect();
        let params = SplitParams { background_count: bg, test_identity_count: test, enroll_fraction: 0.5 };
        let split = split_dataset(&keys, &params, seed).unwrap();
        let all: BTreeSet<String> = (0..ids).map(|i| format!("id{i}")).collect();
        let mut seen = BTreeSet::new();
        for id in &all {
            let roles = [
                split.is_background(id),
                split.is_training(id),
                keys.iter().any(|k| &k.identity_id == id && (split.is_enrollment(k) || split.is_test(k))),
            ];
            prop_assert_eq!(roles.iter().filter(|&&r| r).count(), 1, "identity {} has {:?}", id, roles);
            seen.insert(id.clone());
        }
        prop_assert_eq!(seen, all);
        for k in &keys {
            prop_assert!(!(split.is_enrollment(k) && split.is_test(k)));
        }
        prop_assert_eq!(split, split_dataset(&keys, &params, seed).unwrap());
    }

    #[test]
    fn k_same_pixel_matches_mean_oracle(seed in any::<u64>(), k in 2usize..=5) {
        let background: Vec<LabeledImage> = (0..6).map(|i| labeled(seed.wrapping_add(i as u64), i, 0)).collect();
        let db = build_background_db(&background, 5).unwrap();
        let probe = random_image(16, 16, seed ^ 0xabcdef);
        let out = k_same_pixel(&probe, &db, k).unwrap();
        let neighbors = db.neighbors_of(&probe, k).unwrap();
        for i in 0..probe.len() {
            let sum: f64 = probe.data()[i] + neighbors.iter().map(|&n| db.records[n].image.data()[i]).sum::<f64>();
            prop_assert!((out.data()[i] - sum / k as f64).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn forward_output_in_unit_range(seed in any::<u64>(), linear in any::<bool>()) {
        let hyper = AeHyperparams { features: 2, seed, with_linear_layer: linear, ..AeHyperparams::default() };
        let mut model = ae_init(&hyper, 8, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in model.weights.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random_range(-3.0..3.0);
            }
        }
        let out = ae_forward(&model, &[random_image(8, 8, seed)]).unwrap();
        prop_assert!(out[0].same_shape(&random_image(8, 8, 0)));
        prop_assert!(out[0].data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn checkpoint_round_trip_is_f32_exact(seed in any::<u64>(), linear in any::<bool>()) {
        let hyper = AeHyperparams { features: 2, seed, with_linear_layer: linear, ..AeHyperparams::default() };
        let model = ae_init(&hyper, 8, 8).unwrap();
        let back = decode_checkpoint(&encode_checkpoint(&model).unwrap()).unwrap();
        prop_assert_eq!(&back.hyper, &model.hyper);
        for (a, b) in model.weights.tensors().iter().zip(back.weights.tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert_eq!(*x as f32, *y as f32);
            }
        }
        let again = decode_checkpoint(&encode_checkpoint(&back).unwrap()).unwrap();
        prop_assert_eq!(again.weights, back.weights);
    }
}
