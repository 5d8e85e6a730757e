use image::{Rgb, RgbImage};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scaleaug::dataset::augment_image;
use scaleaug::metric::{pareto_scale_balance, PerScale, ScaleStats, DEFAULT_EPS};
use scaleaug::policy::{decode_genome, encode_policy, parse_policy, serialize_policy};
use scaleaug::{AnnotatedImage, BlendDirection, BoxAnnotation, Genome};

fn random_policy(seed: u64) -> scaleaug::Policy {
    decode_genome(&Genome::random(&mut ChaCha8Rng::seed_from_u64(seed))).unwrap()
}

fn scene(w: u32, h: u32, boxes: &[(f64, f64, f64, f64)]) -> AnnotatedImage {
    let pixels = RgbImage::from_fn(w, h, |x, y| Rgb([(x * 5 % 256) as u8, (y * 7 % 256) as u8, ((x + y) % 256) as u8]));
    let boxes = boxes
        .iter()
        .map(|&(fx, fy, fw, fh)| {
            let bw = (fw * f64::from(w)).max(1.0);
            let bh = (fh * f64::from(h)).max(1.0);
            let x = fx * (f64::from(w) - bw);
            let y = fy * (f64::from(h) - bh);
            BoxAnnotation::from_corner(x, y, bw, bh, 1)
        })
        .collect();
    AnnotatedImage::new("p", pixels, boxes)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_policies_round_trip_through_documents(seed in any::<u64>()) {
        let policy = random_policy(seed);
        let doc = serialize_policy(&policy);
        prop_assert_eq!(&parse_policy(&doc).unwrap(), &policy);
        let genome = encode_policy(&policy).unwrap();
        prop_assert_eq!(decode_genome(&genome).unwrap(), policy);
    }

    #[test]
    fn augmentation_keeps_size_and_boxes_in_frame(
        policy_seed in any::<u64>(),
        seed in any::<u64>(),
        w in 24u32..96,
        h in 24u32..96,
        boxes in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.05..0.9f64, 0.05..0.9f64), 0..4),
    ) {
        let img = scene(w, h, &boxes);
        let policy = random_policy(policy_seed);
        let out = augment_image(&img, &policy, seed, BlendDirection::TransformAtCenter);
        prop_assert_eq!(out.image.pixels.dimensions(), (w, h));
        prop_assert!(out.image.boxes.len() <= img.boxes.len());
        prop_assert_eq!(out.boxes_in, img.boxes.len());
        for b in &out.image.boxes {
            let [x0, y0, x1, y1] = b.bounds();
            let tol = 1e-6;
            prop_assert!(b.w > 0.0 && b.h > 0.0);
            prop_assert!(x0 >= -tol && y0 >= -tol && x1 <= f64::from(w) + tol && y1 <= f64::from(h) + tol, "{:?}", b);
        }
        let again = augment_image(&img, &policy, seed, BlendDirection::TransformAtCenter);
        prop_assert_eq!(&again.image, &out.image);
    }

    #[test]
    fn metric_is_non_negative_and_zero_only_when_balanced(
        losses in prop_oneof![
            (0.0..5.0f64, 0.0..5.0f64, 0.0..5.0f64),
            (0.0..5.0f64).prop_map(|v| (v, v, v)),
        ],
        before in (0.01..1.0f64, 0.01..1.0f64, 0.01..1.0f64),
        gains in (0.5..1.5f64, 0.5..1.5f64, 0.5..1.5f64),
    ) {
        let ap_before = PerScale::new(before.0, before.1, before.2);
        let ap_after = PerScale::new(
            (before.0 * gains.0).min(1.0),
            (before.1 * gains.1).min(1.0),
            (before.2 * gains.2).min(1.0),
        );
        let stats = ScaleStats {
            losses: PerScale::new(losses.0, losses.1, losses.2),
            ap_before,
            ap_after,
            overall_ap_after: None,
        };
        let m = pareto_scale_balance(&stats, DEFAULT_EPS).unwrap();
        prop_assert!(m.value >= 0.0);
        prop_assert!(m.penalty_component >= 1.0);
        prop_assert!((m.value - m.std_component * m.penalty_component).abs() <= 1e-12 * m.value.max(1.0));
        let equal = losses.0 == losses.1 && losses.1 == losses.2;
        prop_assert_eq!(m.std_component == 0.0, equal);
    }
}
