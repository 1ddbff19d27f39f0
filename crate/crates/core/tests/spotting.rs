use microspot_core::dataio::{FrameInterval, GroundTruthEntry};
use microspot_core::features::HoofSequence;
use microspot_core::features::VideoFeatures;
use microspot_core::network::Architecture;
use microspot_core::network::LstmModel;
use microspot_core::preprocess::WindowInterval;
use microspot_core::preprocess::{generate_windows, WindowParams};
use microspot_core::spotting::*;
use microspot_core::Error;
use proptest::prelude::*;

fn window(start: usize, len: usize) -> WindowInterval {
    WindowInterval {
        video_id: "v".into(),
        index: start / 40,
        start,
        end: start + len,
    }
}

fn det(start: usize, confidence: f64) -> Detection {
    Detection {
        window: window(start, 100),
        confidence,
    }
}

fn gt(onset: usize, offset: usize) -> GroundTruthEntry {
    GroundTruthEntry {
        subject_id: "s".into(),
        video_id: "v".into(),
        onset,
        apex: onset,
        offset,
        au_codes: String::new(),
    }
}

#[test]
fn overlap_ratio_cases() {
    let i = FrameInterval { start: 0, end: 100 };
    assert_eq!(
        overlap_ratio(
            &i,
            &FrameInterval {
                start: 20,
                end: 120
            }
        )
        .unwrap(),
        0.8
    );
    assert_eq!(
        overlap_ratio(&i, &FrameInterval { start: 10, end: 30 }).unwrap(),
        1.0
    );
    assert_eq!(
        overlap_ratio(
            &i,
            &FrameInterval {
                start: 100,
                end: 130
            }
        )
        .unwrap(),
        0.0
    );
    assert!(overlap_ratio(&i, &FrameInterval { start: 5, end: 5 }).is_err());
}

#[test]
fn labelling_examples() {
    let windows = generate_windows("v", 400, 200.0, &WindowParams::default()).unwrap();
    // [49, 80) as a ground-truth interval
    let labels = label_windows(&windows, &[gt(50, 80)]);
    let positives: Vec<usize> = labels
        .iter()
        .filter(|l| l.label)
        .map(|l| l.window.start)
        .collect();
    assert_eq!(positives, vec![0, 40]);

    let labels = label_windows(&windows, &[gt(21, 120)]);
    let positives: Vec<usize> = labels
        .iter()
        .filter(|l| l.label)
        .map(|l| l.window.start)
        .collect();
    assert_eq!(positives, vec![0, 40]);

    assert!(label_windows(&windows, &[]).iter().all(|l| !l.label));
}

#[test]
fn label_matches_the_best_covered_interval() {
    let windows = vec![window(0, 100)];
    let labels = label_windows(&windows, &[gt(1, 110), gt(11, 40)]);
    assert_eq!(labels[0].matched, Some(1));
    let other_video = GroundTruthEntry {
        video_id: "w".into(),
        ..gt(11, 40)
    };
    assert!(!label_windows(&windows, &[other_video])[0].label);
}

#[test]
fn nms_examples() {
    let kept = nms(&[det(0, 0.9), det(40, 0.8), det(80, 0.7)]);
    assert_eq!(kept, vec![det(0, 0.9)]);
    let kept = nms(&[det(120, 0.9), det(0, 0.7)]);
    assert_eq!(kept, vec![det(0, 0.7), det(120, 0.9)]);
    assert!(nms(&[]).is_empty());
    let kept = nms(&[det(40, 0.5), det(0, 0.5)]);
    assert_eq!(kept, vec![det(0, 0.5)]);
}

fn features(n: usize) -> VideoFeatures {
    let sequences = (0..n)
        .map(|i| HoofSequence::zeros(window(i * 40, 100), 25, 24))
        .collect();
    VideoFeatures {
        video_id: "v".into(),
        subject_id: "s".into(),
        fps: 200.0,
        steps: 25,
        dims: 24,
        params_hash: [0; 8],
        sequences,
    }
}

#[test]
fn threshold_is_inclusive() {
    let model = LstmModel::zeros(Architecture::default());
    assert_eq!(spot(&features(5), &model, 0.5).unwrap().len(), 5);
    assert!(spot(&features(5), &model, 1.0).unwrap().is_empty());
}

#[test]
fn short_feature_block_is_a_consistency_error() {
    let model = LstmModel::zeros(Architecture::default());
    let mut f = features(3);
    f.sequences[1].data.truncate(10);
    assert!(matches!(spot(&f, &model, 0.5), Err(Error::Consistency(_))));
}

#[test]
fn detections_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let all = vec![det(0, 0.9), det(40, 0.8)];
    let rows = detection_rows(&all, &nms(&all));
    write_detections_csv(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("video,start,end,confidence,kept\n"));
    assert_eq!(read_detections_csv(&path).unwrap(), rows);
    assert_eq!(rows.iter().filter(|r| r.kept).count(), 1);
}

fn detections() -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((0usize..50, 0u8..10), 0..30).prop_map(|v| {
        v.into_iter()
            .map(|(slot, c)| det(slot * 20, c as f64 / 10.0))
            .collect()
    })
}

proptest! {
    #[test]
    fn nms_output_is_disjoint_and_idempotent(d in detections()) {
        let kept = nms(&d);
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(!a.window.interval().intersects(&b.window.interval()));
            }
        }
        prop_assert_eq!(nms(&kept), kept.clone());
        for s in &d {
            prop_assert!(kept.iter().any(|k| k.window.interval().intersects(&s.window.interval())
                && k.confidence >= s.confidence));
        }
    }
}
