use microspot_core::dataio::*;
use microspot_core::Error;

#[test]
fn gt_interval_is_zero_based_half_open() {
    let gt = GroundTruthEntry {
        subject_id: "006".into(),
        video_id: "006_1".into(),
        onset: 50,
        apex: 60,
        offset: 80,
        au_codes: "12".into(),
    };
    assert_eq!(gt.interval(), FrameInterval::new(49, 80));
    assert_eq!(gt.interval().len(), gt.offset - gt.onset + 1);
}

#[test]
fn gt_rejects_onset_after_offset() {
    let gt = GroundTruthEntry {
        subject_id: "a".into(),
        video_id: "v".into(),
        onset: 10,
        apex: 10,
        offset: 9,
        au_codes: String::new(),
    };
    assert!(matches!(gt.validate(), Err(Error::Validation(_))));
}

#[test]
fn frame_rejects_out_of_range_intensity() {
    assert!(GrayFrame::new(2, 1, vec![0.0, 1.5]).is_err());
    assert!(GrayFrame::new(2, 1, vec![0.0]).is_err());
}

#[test]
fn u8_round_trip_is_exact() {
    let bytes: Vec<u8> = (0..=255).collect();
    let frame = GrayFrame::from_u8(16, 16, &bytes).unwrap();
    assert_eq!(frame.to_u8(), bytes);
}

#[test]
fn static_landmarks_apply_to_every_frame() {
    let set = LandmarkSet::static_layout("v", [Point::new(1.0, 2.0); LANDMARK_COUNT]);
    assert_eq!(set.for_frame(123).unwrap()[0], Point::new(1.0, 2.0));
}
