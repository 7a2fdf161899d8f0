mod support;

use proptest::prelude::*;
use resflu_core::data::{
    generate_synthetic, normalize_sequence, parse_dataset, partition, write_dataset, AttributeValue, Frame, Keypoint,
    SkeletonSequence, SplitProtocol, SynthConfig, View, ViewNoise, KEYPOINTS,
};
use resflu_core::nn::{softmax, tempered_softmax};
use support::oracles::{self, plain_softmax};

proptest! {
    #[test]
    fn softmax_ignores_constant_shifts(z in prop::collection::vec(-20.0f64..20.0, 1..12), c in -50.0f64..50.0) {
        let a = softmax(&z).unwrap();
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let b = softmax(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_temperature_is_plain_softmax(z in prop::collection::vec(-20.0f64..20.0, 1..12)) {
        let t = tempered_softmax(&z, 1.0).unwrap().probs;
        for (x, y) in t.iter().zip(plain_softmax(&z)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn higher_temperature_flattens(z in prop::collection::vec(-5.0f64..5.0, 2..8)) {
        let sharp = tempered_softmax(&z, 1.0).unwrap().probs;
        let soft = tempered_softmax(&z, 4.0).unwrap().probs;
        let max_sharp = sharp.iter().copied().fold(0.0, f64::max);
        let max_soft = soft.iter().copied().fold(0.0, f64::max);
        prop_assert!(max_soft <= max_sharp + 1e-12);
    }
}

#[test]
fn softmax_kl_and_distillation_oracles() {
    oracles::softmax_and_divergence();
}

fn sequence_strategy() -> impl Strategy<Value = SkeletonSequence> {
    let frame = prop::collection::vec((1.0f64..640.0, 1.0f64..480.0), KEYPOINTS);
    prop::collection::vec(frame, 1..5).prop_map(|frames| {
        let frames: Vec<Frame> =
            frames.into_iter().map(|kps| std::array::from_fn(|i| Keypoint::new(kps[i].0, kps[i].1))).collect();
        SkeletonSequence::new(frames).unwrap()
    })
}

fn first_frame_diagonal(seq: &SkeletonSequence) -> f64 {
    let f = &seq.frames[0];
    let xs = f.iter().map(|k| k.x);
    let ys = f.iter().map(|k| k.y);
    let w = xs.clone().fold(f64::MIN, f64::max) - xs.fold(f64::MAX, f64::min);
    let h = ys.clone().fold(f64::MIN, f64::max) - ys.fold(f64::MAX, f64::min);
    w.hypot(h)
}

proptest! {
    #[test]
    fn normalisation_is_idempotent(seq in sequence_strategy()) {
        let once = normalize_sequence(&seq).sequence;
        let twice = normalize_sequence(&once).sequence;
        for (a, b) in once.frames.iter().flatten().zip(twice.frames.iter().flatten()) {
            prop_assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
        }
        prop_assert!((first_frame_diagonal(&once) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalisation_ignores_translation(seq in sequence_strategy(), dx in -100.0f64..100.0, dy in -100.0f64..100.0) {
        let moved = SkeletonSequence::new(
            seq.frames.iter().map(|f| f.map(|k| Keypoint::new(k.x + dx, k.y + dy))).collect(),
        ).unwrap();
        let a = normalize_sequence(&seq).sequence;
        let b = normalize_sequence(&moved).sequence;
        for (p, q) in a.frames.iter().flatten().zip(b.frames.iter().flatten()) {
            prop_assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9);
        }
    }

    #[test]
    fn partitions_are_disjoint_and_exhaustive(seed in 0u64..1000, held in 0usize..3, n_subjects in 2usize..6) {
        let config = SynthConfig {
            n_classes: 2,
            samples_per_class: 7,
            frames: 2,
            noise: ViewNoise::uniform(0.1),
            seed,
            n_subjects,
        };
        let data = generate_synthetic(&config).unwrap();
        let ids = |d: &resflu_core::data::Dataset| d.samples.iter().map(|s| s.id.clone()).collect::<Vec<_>>();
        let protocols = [
            SplitProtocol::ByAttribute(AttributeValue::View(View::ALL[held])),
            SplitProtocol::BySubjects(vec![format!("S{:02}", held % n_subjects)]),
        ];
        for protocol in protocols {
            let (train, test) = partition(&data, &protocol).unwrap();
            let (a, b) = (ids(&train), ids(&test));
            prop_assert!(a.iter().all(|id| !b.contains(id)));
            let mut all: Vec<String> = a.into_iter().chain(b).collect();
            all.sort();
            let mut expect = ids(&data);
            expect.sort();
            prop_assert_eq!(all, expect);
            if let SplitProtocol::ByAttribute(v) = protocol {
                prop_assert!(test.samples.iter().all(|s| v.matches(&s.attributes)));
                prop_assert!(train.samples.iter().all(|s| !v.matches(&s.attributes)));
            }
        }
    }

    #[test]
    fn dataset_text_round_trip(seed in 0u64..1000) {
        let config = SynthConfig {
            n_classes: 3,
            samples_per_class: 2,
            frames: 3,
            noise: ViewNoise::uniform(0.05),
            seed,
            ..SynthConfig::default()
        };
        let data = generate_synthetic(&config).unwrap();
        let mut text = Vec::new();
        write_dataset(&data, &mut text).unwrap();
        let back = parse_dataset(text.as_slice()).unwrap();
        prop_assert_eq!(&back, &data);
        let mut again = Vec::new();
        write_dataset(&back, &mut again).unwrap();
        prop_assert_eq!(text, again);
    }
}
