use subact_core::config::GeneratorConfig;
use subact_core::data::{Dataset, Sample};
use subact_core::synth::generate_synthetic;

fn small_cfg() -> GeneratorConfig {
    GeneratorConfig {
        holistic_classes: 4,
        sub_action_classes: 8,
        train_samples: 40,
        test_samples: 20,
        joints: 5,
        segment_frames_min: 6,
        segment_frames_max: 10,
        ..GeneratorConfig::default()
    }
}

#[test]
fn same_seed_gives_byte_identical_datasets() {
    let a = generate_synthetic(&small_cfg(), 11).unwrap();
    let b = generate_synthetic(&small_cfg(), 11).unwrap();
    assert_eq!(a.train, b.train);
    assert_eq!(a.test, b.test);
    assert_eq!(a.labels.holistic_texts(), b.labels.holistic_texts());
    assert_eq!(a.grammars, b.grammars);

    let c = generate_synthetic(&small_cfg(), 12).unwrap();
    assert_ne!(a.train, c.train);
}

#[test]
fn tracks_cover_every_frame_and_labels_are_in_range() {
    let data = generate_synthetic(&small_cfg(), 3).unwrap();
    let check = |ds: &Dataset| {
        assert!(!ds.samples.is_empty());
        for s in ds.samples.iter() {
            s.motion.validate_raw().unwrap();
            s.track.validate(s.motion.frames).unwrap();
            assert!(s.label < data.labels.holistic_count());
            for seg in &s.track.segments {
                assert!(seg.class_id < data.labels.sub_count());
            }
        }
    };
    check(&data.train);
    check(&data.test);
    assert_eq!(data.train.samples.len(), 40);
    assert_eq!(data.test.samples.len(), 20);
}

#[test]
fn every_class_and_split_is_represented() {
    let data = generate_synthetic(&small_cfg(), 5).unwrap();
    for class in 0..4 {
        assert!(data.train.samples.iter().any(|s| s.label == class));
        assert!(data.test.samples.iter().any(|s| s.label == class));
    }
    assert!(data.train.samples.iter().any(|s| s.id.starts_with("train-")));
    assert!(data.test.samples.iter().any(|s| s.id.starts_with("test-")));
}

#[test]
fn grammars_follow_segment_tracks() {
    let data = generate_synthetic(&small_cfg(), 7).unwrap();
    for s in &data.train.samples {
        let grammar = &data.grammars[s.label];
        let observed: Vec<usize> = s.track.segments.iter().map(|seg| seg.class_id - 1).collect();
        assert_eq!(&observed, grammar, "sample {}", s.id);
    }
}

#[test]
fn last_two_classes_differ_in_exactly_one_twin() {
    let data = generate_synthetic(&small_cfg(), 9).unwrap();
    let a = &data.grammars[2];
    let b = &data.grammars[3];
    assert_eq!(a.len(), b.len());
    let diffs: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
    assert_eq!(diffs.len(), 1, "{a:?} vs {b:?}");
    let i = diffs[0];
    // Twins share a template family: ids differ only in the low bit.
    assert_eq!(a[i] / 2, b[i] / 2);
    assert_eq!(a[i] ^ 1, b[i]);
}

#[test]
fn first_two_classes_share_no_template_family() {
    let data = generate_synthetic(&small_cfg(), 13).unwrap();
    let fams = |g: &Vec<usize>| g.iter().map(|&p| p / 2).collect::<std::collections::BTreeSet<_>>();
    let f0 = fams(&data.grammars[0]);
    let f1 = fams(&data.grammars[1]);
    assert!(f0.is_disjoint(&f1), "{f0:?} vs {f1:?}");
}

fn motion_distance(a: &Sample, b: &Sample, frames: usize) -> f64 {
    use subact_core::data::interpolate_nearest;
    let ma = interpolate_nearest(&a.motion, frames).unwrap();
    let mb = interpolate_nearest(&b.motion, frames).unwrap();
    let mut d = 0.0;
    for j in 0..ma.joints {
        for t in 0..frames {
            for c in 0..3 {
                let diff = ma.channel(j, t, c) - mb.channel(j, t, c);
                d += diff * diff;
            }
        }
    }
    d
}

/// Classes built from disjoint template families must be separable from raw
/// motion alone: a brute-force 1-nearest-neighbor classifier on classes 0 and
/// 1 has to beat coin flipping by a wide margin.
#[test]
fn nearest_neighbor_on_raw_motion_beats_chance_for_disjoint_classes() {
    let data = generate_synthetic(&small_cfg(), 17).unwrap();
    let train: Vec<&Sample> = data.train.samples.iter().filter(|s| s.label < 2).collect();
    let test: Vec<&Sample> = data.test.samples.iter().filter(|s| s.label < 2).collect();
    assert!(test.len() >= 8);

    let frames = 32;
    let correct = test
        .iter()
        .filter(|t| {
            let nearest = train
                .iter()
                .min_by(|a, b| {
                    motion_distance(t, a, frames)
                        .partial_cmp(&motion_distance(t, b, frames))
                        .unwrap()
                })
                .unwrap();
            nearest.label == t.label
        })
        .count();
    let accuracy = correct as f64 / test.len() as f64;
    assert!(accuracy > 0.75, "1-NN accuracy {accuracy} not above chance");
}

#[test]
fn degenerate_configs_are_rejected() {
    let mut cfg = small_cfg();
    cfg.holistic_classes = 1;
    assert!(generate_synthetic(&cfg, 0).is_err());

    let mut cfg = small_cfg();
    cfg.segment_frames_min = 0;
    assert!(generate_synthetic(&cfg, 0).is_err());

    let mut cfg = small_cfg();
    cfg.segment_frames_max = cfg.segment_frames_min - 1;
    assert!(generate_synthetic(&cfg, 0).is_err());
}

#[test]
fn label_texts_are_distinct_and_nonempty() {
    let data = generate_synthetic(&small_cfg(), 21).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for text in data.labels.holistic_texts() {
        assert!(!text.trim().is_empty());
        assert!(seen.insert(text.clone()), "duplicate holistic text {text:?}");
    }
    let mut seen = std::collections::BTreeSet::new();
    for text in data.labels.sub_texts() {
        assert!(!text.trim().is_empty());
        assert!(seen.insert(text.clone()), "duplicate sub-action text {text:?}");
    }
}
