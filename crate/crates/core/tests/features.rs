use microspot_core::features::*;
use microspot_core::optflow::FlowField;
use microspot_core::preprocess::PixelRect;
use microspot_core::preprocess::{Roi, WindowInterval};
use microspot_core::Error;
use proptest::prelude::*;
use std::f64::consts::TAU;
use std::path::Path;

fn deg(d: f64) -> f64 {
    d.to_radians()
}

#[test]
fn vector_on_a_centre_fills_one_bin() {
    let h = hoof(&[(1.0, 0.0)], &HoofParams::default()).unwrap();
    assert_eq!(h.bins, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn midpoint_vector_splits_evenly() {
    let a = deg(22.5);
    let h = hoof(&[(2.0 * a.cos(), 2.0 * a.sin())], &HoofParams::default()).unwrap();
    assert!((h.bins[0] - 0.5).abs() < 1e-12 && (h.bins[1] - 0.5).abs() < 1e-12);
    assert!(h.bins[2..].iter().all(|&b| b.abs() < 1e-12));
}

#[test]
fn magnitudes_weight_the_bins() {
    let h = hoof(&[(0.0, 3.0), (0.0, -1.0)], &HoofParams::default()).unwrap();
    assert!((h.bins[2] - 0.75).abs() < 1e-12);
    assert!((h.bins[6] - 0.25).abs() < 1e-12);
    assert!((h.total() - 1.0).abs() < 1e-12);
}

#[test]
fn zero_flow_gives_zero_histogram() {
    let h = hoof(&[(0.0, 0.0); 10], &HoofParams::default()).unwrap();
    assert!(h.bins.iter().all(|&b| b == 0.0));
}

#[test]
fn non_finite_vector_is_rejected() {
    assert!(hoof(&[(f64::NAN, 0.0)], &HoofParams::default()).is_err());
    assert!(hoof_mass(&[(1.0, 0.0)], 1, 0.0).is_err());
}

#[test]
fn threshold_drops_short_vectors() {
    let p = HoofParams {
        min_magnitude: 0.5,
        ..HoofParams::default()
    };
    let h = hoof(&[(0.1, 0.0), (0.0, 1.0)], &p).unwrap();
    assert_eq!(h.bins[2], 1.0);
    assert_eq!(h.bins[0], 0.0);
}

fn constant_flow(w: usize, h: usize, u: f64, v: f64) -> FlowField {
    FlowField {
        width: w,
        height: h,
        u: vec![u; w * h],
        v: vec![v; w * h],
    }
}

#[test]
fn pool_constant_roi() {
    let f = constant_flow(32, 32, 1.0, 1.0);
    let roi = Roi {
        boxes: vec![PixelRect {
            x0: 5,
            y0: 5,
            x1: 15,
            y1: 15,
        }],
    };
    let v = pool_roi(&f, &roi, 0).unwrap();
    assert_eq!(v.len(), 100);
    assert!(v.iter().all(|&p| p == (1.0, 1.0)));
    // touching the border loses the outer ring
    let edge = Roi {
        boxes: vec![PixelRect {
            x0: 0,
            y0: 0,
            x1: 10,
            y1: 10,
        }],
    };
    assert_eq!(pool_roi(&f, &edge, 0).unwrap().len(), 81);
}

#[test]
fn pool_union_of_two_boxes() {
    let f = constant_flow(32, 32, 0.5, 0.0);
    let roi = Roi {
        boxes: vec![
            PixelRect {
                x0: 2,
                y0: 2,
                x1: 7,
                y1: 7,
            },
            PixelRect {
                x0: 20,
                y0: 20,
                x1: 25,
                y1: 25,
            },
        ],
    };
    assert_eq!(pool_roi(&f, &roi, 2).unwrap().len(), 50);
}

#[test]
fn roi_outside_interior_is_degenerate() {
    let f = constant_flow(32, 32, 0.5, 0.0);
    let roi = Roi {
        boxes: vec![PixelRect {
            x0: 0,
            y0: 0,
            x1: 32,
            y1: 1,
        }],
    };
    assert!(matches!(
        pool_roi(&f, &roi, 1),
        Err(Error::DegenerateRoi(1))
    ));
}

#[test]
fn feature_cache_round_trip() {
    let window = WindowInterval {
        video_id: "v".into(),
        index: 3,
        start: 120,
        end: 220,
    };
    let mut seq = HoofSequence::zeros(window, 25, 24);
    seq.data[7] = 0.25;
    let feats = VideoFeatures {
        video_id: "v".into(),
        subject_id: "s".into(),
        fps: 200.0,
        steps: 25,
        dims: 24,
        params_hash: *b"abcdefgh",
        sequences: vec![seq],
    };
    let bytes = feats.to_bytes();
    assert_eq!(&bytes[..8], b"MSFEAT01");
    let back = VideoFeatures::from_bytes(&bytes, Path::new("mem")).unwrap();
    assert_eq!(back, feats);
    assert!(VideoFeatures::from_bytes(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
}

fn vectors() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..60)
}

proptest! {
    #[test]
    fn mass_is_conserved(v in vectors()) {
        let mass: f64 = hoof_mass(&v, 8, 0.0).unwrap().iter().sum();
        let total: f64 = v.iter().map(|(a, b)| a.hypot(*b)).sum();
        prop_assert!((mass - total).abs() < 1e-9);
    }

    #[test]
    fn scaling_leaves_histogram_unchanged(v in vectors(), c in 0.01..100.0f64) {
        let p = HoofParams::default();
        let a = hoof(&v, &p).unwrap();
        let scaled: Vec<_> = v.iter().map(|(x, y)| (c * x, c * y)).collect();
        let b = hoof(&scaled, &p).unwrap();
        for (x, y) in a.bins.iter().zip(&b.bins) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rotating_one_bin_shifts_histogram(v in vectors()) {
        let p = HoofParams::default();
        let a = hoof(&v, &p).unwrap();
        let (s, c) = (TAU / 8.0).sin_cos();
        let rotated: Vec<_> = v.iter().map(|(x, y)| (c * x - s * y, s * x + c * y)).collect();
        let b = hoof(&rotated, &p).unwrap();
        for k in 0..8 {
            prop_assert!((b.bins[(k + 1) % 8] - a.bins[k]).abs() < 1e-9);
        }
    }
}
