use microspot_core::config::FeatureParams;
use microspot_core::dataio::{generate_synthetic, Dataset, SyntheticSpec};
use microspot_core::features::build_sequence;
use microspot_core::features::VideoFeatures;
use microspot_core::optflow::HornSchunck;
use microspot_core::pipeline::*;
use microspot_core::preprocess::apply_alignment;
use microspot_core::Error;

fn small() -> Dataset {
    let spec = SyntheticSpec {
        n_subjects: 2,
        n_videos: 2,
        frames_per_video: 260,
        movements_per_video: 1,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec).unwrap().dataset
}

#[test]
fn hash_tracks_parameters() {
    let a = FeatureParams::default();
    let mut b = a;
    b.flow.alpha = 2.0;
    assert_eq!(params_hash(&a), params_hash(&a));
    assert_ne!(params_hash(&a), params_hash(&b));
}

#[test]
fn cached_flows_match_per_window_extraction() {
    let data = small();
    let params = FeatureParams::default();
    let seq = &data.sequences[0];
    let lm = data.landmarks_for(&seq.video_id).unwrap();
    let est = HornSchunck::new(params.flow);
    let features = extract_video_features(seq, lm, &params, &est).unwrap();
    let plans = plan_video(seq, lm, &params).unwrap();
    assert_eq!(features.sequences.len(), 5);
    assert_eq!(plans.len(), 5);
    let gap = params.flow.gap(seq.fps);
    assert_eq!(gap, 4);
    for (s, p) in features.sequences.iter().zip(&plans) {
        assert_eq!(p.window, s.window);
        let frames = apply_alignment(&seq.frames[s.window.start..s.window.end], &p.transform);
        let direct = build_sequence(&frames, &s.window, &p.rois, &est, gap, &params.hoof).unwrap();
        let direct: Vec<f64> = direct.data.iter().map(|x| f64::from(*x as f32)).collect();
        assert_eq!(s.data, direct, "window {}", s.window.index);
    }
}

#[test]
fn cache_files_round_trip_and_labels_follow_ground_truth() {
    let data = small();
    let mut features = extract_dataset_features(&data, &FeatureParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_feature_cache(dir.path(), &features).unwrap();
    let back = read_feature_cache(dir.path()).unwrap();
    assert_eq!(back, features);

    label_features(&mut features, &data.ground_truth);
    let positives: usize = features
        .iter()
        .flat_map(|f| &f.sequences)
        .filter(|s| s.label == Some(true))
        .count();
    assert!(positives >= 2);
    let refs: Vec<&VideoFeatures> = features.iter().collect();
    assert_eq!(training_samples(&refs).unwrap().len(), 10);
    let unlabelled: Vec<&VideoFeatures> = back.iter().collect();
    assert!(matches!(
        training_samples(&unlabelled),
        Err(Error::Consistency(_))
    ));
}

#[test]
fn mixed_parameter_caches_are_rejected() {
    let data = small();
    let mut features = extract_dataset_features(&data, &FeatureParams::default()).unwrap();
    features[1].params_hash = [1; 8];
    let dir = tempfile::tempdir().unwrap();
    write_feature_cache(dir.path(), &features).unwrap();
    assert!(matches!(
        read_feature_cache(dir.path()),
        Err(Error::Consistency(_))
    ));
}
