use microspot_core::dataio::GrayFrame;
use microspot_core::optflow::*;
use microspot_core::preprocess::WindowInterval;
use microspot_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth random texture sampled at `(x - dx, y - dy)`: a sum of seeded
/// sinusoids, so integer and sub-pixel shifts are exact.
pub fn textured_pair(size: usize, dx: f64, dy: f64, seed: u64) -> (GrayFrame, GrayFrame) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64)> = (0..8)
        .map(|_| {
            let wavelength: f64 = rng.random_range(16.0..32.0);
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let k = 2.0 * std::f64::consts::PI / wavelength;
            (k * angle.cos(), k * angle.sin(), rng.random_range(0.0..6.3))
        })
        .collect();
    let render = |sx: f64, sy: f64| {
        let data = (0..size * size)
            .map(|i| {
                let (x, y) = ((i % size) as f64 - sx, (i / size) as f64 - sy);
                let s: f64 = waves
                    .iter()
                    .map(|(kx, ky, p)| (kx * x + ky * y + p).sin())
                    .sum();
                (0.5 + 0.05 * s) as f32
            })
            .collect();
        GrayFrame::new(size, size, data).unwrap()
    };
    (render(0.0, 0.0), render(dx, dy))
}

#[test]
fn identical_frames_give_exactly_zero_flow() {
    let (a, _) = textured_pair(32, 0.0, 0.0, 1);
    let f = compute_flow(&a, &a, &FlowParams::default()).unwrap();
    assert!(f.u.iter().chain(&f.v).all(|&x| x == 0.0));
}

#[test]
fn flat_frames_give_zero_flow() {
    let a = GrayFrame::filled(16, 16, 0.3);
    let b = GrayFrame::filled(16, 16, 0.3);
    let f = compute_flow(&a, &b, &FlowParams::default()).unwrap();
    assert!(f.u.iter().chain(&f.v).all(|&x| x == 0.0));
}

#[test]
fn recovers_a_two_pixel_shift() {
    let (a, b) = textured_pair(64, 2.0, 0.0, 3);
    let f = compute_flow(&a, &b, &FlowParams::default()).unwrap();
    let (mu, mv) = f.interior_mean(4);
    assert!((1.75..=2.25).contains(&mu), "mean u {mu}");
    assert!(mv.abs() < 0.25, "mean v {mv}");
}

#[test]
fn negated_shift_negates_mean_flow() {
    let (a, b) = textured_pair(48, 0.0, 1.0, 5);
    let (_, down) = compute_flow(&a, &b, &FlowParams::default())
        .unwrap()
        .interior_mean(4);
    let (_, up) = compute_flow(&b, &a, &FlowParams::default())
        .unwrap()
        .interior_mean(4);
    assert!(down > 0.5 && up < -0.5, "{down} {up}");
}

#[test]
fn dimension_mismatch_is_rejected() {
    let a = GrayFrame::filled(8, 8, 0.1);
    let b = GrayFrame::filled(8, 9, 0.1);
    assert!(matches!(
        compute_flow(&a, &b, &FlowParams::default()),
        Err(Error::Validation(_))
    ));
}

#[test]
fn flow_is_deterministic() {
    let (a, b) = textured_pair(32, 1.0, 1.0, 9);
    let p = FlowParams::default();
    assert_eq!(
        compute_flow(&a, &b, &p).unwrap(),
        compute_flow(&a, &b, &p).unwrap()
    );
}

fn window(start: usize, len: usize) -> WindowInterval {
    WindowInterval {
        video_id: "v".into(),
        index: 0,
        start,
        end: start + len,
    }
}

#[test]
fn gap_at_200_fps_is_four_frames() {
    assert_eq!(FlowParams::default().gap(200.0), 4);
    assert_eq!(FlowParams::default().gap(30.0), 1);
}

#[test]
fn twenty_five_pairs_per_window_at_200_fps() {
    let pairs = flow_pairs_for_window(&window(0, 100), 4);
    assert_eq!(pairs.len(), 25);
    let mut expected: Vec<(usize, usize)> = (0..24).map(|k| (4 * k, 4 * k + 4)).collect();
    expected.push((96, 99));
    assert_eq!(pairs, expected);
    let shifted = flow_pairs_for_window(&window(40, 100), 4);
    assert_eq!(shifted[0], (40, 44));
    assert_eq!(shifted[24], (136, 139));
}

#[test]
fn small_window_pairs() {
    assert_eq!(
        flow_pairs_for_window(&window(0, 8), 4),
        vec![(0, 4), (4, 7)]
    );
}

#[test]
fn unit_gap_pairs_are_consecutive_with_clipped_tail() {
    let pairs = flow_pairs_for_window(&window(0, 100), 1);
    assert_eq!(pairs.len(), 100);
    // enumeration oracle
    for (k, &(a, b)) in pairs.iter().enumerate().take(99) {
        assert_eq!((a, b), (k, k + 1));
    }
    assert_eq!(pairs[99], (98, 99));
}

#[test]
fn flow_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.bin");
    let mut f = FlowField::zeros(3, 2);
    f.u[1] = 0.5;
    f.v[5] = -2.25;
    write_flow_dump(&path, &f).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len(), 16 + 8 * 6);
    assert_eq!(&bytes[..8], b"MSFLOW01");
    assert_eq!(read_flow_dump(&path).unwrap(), f);
}
