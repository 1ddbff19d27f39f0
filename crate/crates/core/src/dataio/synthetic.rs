//! Deterministic synthetic face videos with planted micro-movements.
//!
//! Each video shows a static procedural texture (a face-like oval with
//! sinusoidal detail) under Gaussian pixel noise. All videos of a dataset
//! share the texture's wave layout and differ in phase, the way faces share
//! structure across subjects. A planted movement is a
//! smooth displacement bump centred on one region of interest whose amplitude
//! follows a raised-cosine onset/apex/offset envelope.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    Dataset, FrameInterval, FrameSequence, GrayFrame, GroundTruthEntry, LandmarkSet, Landmarks,
    Point, LANDMARK_COUNT,
};
use crate::error::{Error, Result};
use crate::preprocess::WindowParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_subjects: usize,
    pub n_videos: usize,
    pub frames_per_video: usize,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub movements_per_video: usize,
    /// Peak displacement in pixels at the apex.
    pub amplitude: f64,
    /// Inclusive bounds on the movement duration in frames.
    pub duration_min: usize,
    pub duration_max: usize,
    /// Standard deviation of the additive pixel noise, in intensity units.
    pub noise_std: f64,
    /// Displacement direction as `atan2(v, u)` in degrees, image coordinates
    /// (y grows downward, so 270 is an upward movement).
    pub direction_deg: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            n_subjects: 4,
            n_videos: 6,
            frames_per_video: 1000,
            fps: 200.0,
            width: 64,
            height: 64,
            movements_per_video: 3,
            amplitude: 2.0,
            duration_min: 30,
            duration_max: 60,
            noise_std: 0.004,
            direction_deg: 270.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_subjects", self.n_subjects),
            ("n_videos", self.n_videos),
            ("frames_per_video", self.frames_per_video),
            ("movements_per_video", self.movements_per_video),
            ("duration_min", self.duration_min),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Validation("fps must be positive".into()));
        }
        if self.width < 32 || self.height < 32 {
            return Err(Error::Validation(
                "synthetic frames must be at least 32x32".into(),
            ));
        }
        if !(self.amplitude >= 0.0 && self.noise_std >= 0.0) {
            return Err(Error::Validation(
                "amplitude and noise must be nonnegative".into(),
            ));
        }
        let window = WindowParams::default().window_len(self.fps);
        if self.duration_min < 3 || self.duration_min > self.duration_max {
            return Err(Error::Validation(format!(
                "duration range [{}, {}] must satisfy 3 <= min <= max",
                self.duration_min, self.duration_max
            )));
        }
        if self.duration_max > window {
            return Err(Error::Validation(format!(
                "movement duration {} exceeds the window length {window}",
                self.duration_max
            )));
        }
        let slot = self.frames_per_video / self.movements_per_video;
        if slot < self.duration_max + 2 {
            return Err(Error::Validation(format!(
                "{} movements of up to {} frames do not fit in {} frames",
                self.movements_per_video, self.duration_max, self.frames_per_video
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoiTarget {
    LeftBrow,
    RightBrow,
    MouthCorners,
}

impl RoiTarget {
    pub const ALL: [RoiTarget; 3] = [
        RoiTarget::LeftBrow,
        RoiTarget::RightBrow,
        RoiTarget::MouthCorners,
    ];

    /// Position of this region in a feature timestep (0, 1 or 2).
    pub fn index(self) -> usize {
        match self {
            RoiTarget::LeftBrow => 0,
            RoiTarget::RightBrow => 1,
            RoiTarget::MouthCorners => 2,
        }
    }
}

/// Construction-time record of one planted movement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedMovement {
    pub video_id: String,
    pub roi: RoiTarget,
    pub interval: FrameInterval,
    pub apex: usize,
    pub direction: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    pub planted: Vec<PlantedMovement>,
}

/// Fixed 68-point layout scaled to the frame, used for every synthetic video.
///
/// Eye centres sit at `(w/2 ∓ d/2, 0.4375 h)` with inter-ocular distance
/// `d = 0.3125 w`; brows are arched lines `0.35 d` above the eyes and the
/// mouth corners lie `1.1 d` below the eye line, `0.8 d` apart.
pub fn synthetic_layout(width: usize, height: usize) -> Landmarks {
    let (w, h) = (width as f64, height as f64);
    let d = 0.3125 * w;
    let cx = 0.5 * w;
    let ye = 0.4375 * h;
    let mut p = [Point::new(0.0, 0.0); LANDMARK_COUNT];

    // jaw: half ellipse from the left temple round the chin to the right
    for (i, pt) in p[0..17].iter_mut().enumerate() {
        let a = PI * i as f64 / 16.0;
        *pt = Point::new(cx - 0.9 * d * a.cos(), ye + 1.6 * d * a.sin());
    }
    // brows, outer to inner on the left, inner to outer on the right
    let arch = [0.0, -0.05, -0.08, -0.05, 0.0];
    for k in 0..5 {
        let t = -0.35 + 0.175 * k as f64;
        let y = ye - 0.35 * d + arch[k] * d;
        p[17 + k] = Point::new(cx - 0.5 * d + t * d, y);
        p[22 + k] = Point::new(cx + 0.5 * d + t * d, y);
    }
    // nose bridge and nostrils
    for k in 0..4 {
        p[27 + k] = Point::new(cx, ye + 0.15 * d * k as f64);
    }
    for k in 0..5 {
        p[31 + k] = Point::new(cx - 0.25 * d + 0.125 * d * k as f64, ye + 0.7 * d);
    }
    // eyes: hexagons centred on the eye centres
    let (rx, ry) = (0.22 * d, 0.1 * d);
    let hexagon = [
        (-rx, 0.0),
        (-rx / 2.0, -ry),
        (rx / 2.0, -ry),
        (rx, 0.0),
        (rx / 2.0, ry),
        (-rx / 2.0, ry),
    ];
    for (k, (dx, dy)) in hexagon.iter().enumerate() {
        p[36 + k] = Point::new(cx - 0.5 * d + dx, ye + dy);
        p[42 + k] = Point::new(cx + 0.5 * d + dx, ye + dy);
    }
    // mouth: outer contour 48..59 starting at the left corner, inner 60..67
    let ym = ye + 1.1 * d;
    let (mw, mh) = (0.4 * d, 0.12 * d);
    for k in 0..12 {
        let a = PI - 2.0 * PI * k as f64 / 12.0;
        p[48 + k] = Point::new(cx + mw * a.cos(), ym - mh * a.sin());
    }
    for k in 0..8 {
        let a = PI - 2.0 * PI * k as f64 / 8.0;
        p[60 + k] = Point::new(cx + 0.6 * mw * a.cos(), ym - 0.5 * mh * a.sin());
    }
    p
}

const TEXTURE_WAVES: usize = 12;

struct Texture {
    // (kx, ky, phase, amplitude)
    waves: Vec<(f64, f64, f64, f64)>,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Texture {
    /// Wave orientations and wavelengths come from `shared`, so every video
    /// has the same structure; `own` only shifts the phases.
    fn random(shared: &mut ChaCha8Rng, own: &mut ChaCha8Rng, width: usize, height: usize) -> Self {
        // orientations spread evenly so no flow direction is favoured
        let waves = (0..TEXTURE_WAVES)
            .map(|i| {
                let wavelength = shared.random_range(6.0..14.0);
                let angle = PI * (i as f64 + shared.random_range(0.0..1.0)) / TEXTURE_WAVES as f64;
                let k = 2.0 * PI / wavelength;
                (
                    k * angle.cos(),
                    k * angle.sin(),
                    own.random_range(0.0..2.0 * PI),
                    0.03,
                )
            })
            .collect();
        Texture {
            waves,
            cx: 0.5 * width as f64,
            cy: 0.55 * height as f64,
            rx: 0.42 * width as f64,
            ry: 0.5 * height as f64,
        }
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let r2 = ((x - self.cx) / self.rx).powi(2) + ((y - self.cy) / self.ry).powi(2);
        let face = 0.2 * (-r2 * r2).exp();
        let detail: f64 = self
            .waves
            .iter()
            .map(|&(kx, ky, phase, amp)| amp * (kx * x + ky * y + phase).sin())
            .sum();
        0.35 + face + detail
    }
}

/// Raised-cosine envelope over `[start, start + duration)`, 1 at the apex.
fn envelope(frame: usize, start: usize, duration: usize) -> f64 {
    if frame < start || frame >= start + duration {
        return 0.0;
    }
    let t = (frame - start) as f64 / (duration - 1) as f64;
    0.5 * (1.0 - (2.0 * PI * t).cos())
}

fn bump_centres(roi: RoiTarget, layout: &Landmarks) -> Vec<Point> {
    let centroid = |range: std::ops::Range<usize>| {
        let n = range.len() as f64;
        let (sx, sy) = range.fold((0.0, 0.0), |(sx, sy), i| {
            (sx + layout[i].x, sy + layout[i].y)
        });
        Point::new(sx / n, sy / n)
    };
    match roi {
        RoiTarget::LeftBrow => vec![centroid(17..22)],
        RoiTarget::RightBrow => vec![centroid(22..27)],
        RoiTarget::MouthCorners => vec![layout[48], layout[54]],
    }
}

/// Generates a synthetic dataset. Identical specs give bit-identical output.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let layout = synthetic_layout(spec.width, spec.height);
    let iod = layout_iod(&layout);
    let dir_rad = spec.direction_deg.to_radians();
    let direction = (dir_rad.cos(), dir_rad.sin());
    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| Error::Validation(format!("noise distribution: {e}")))?;

    let mut dataset = Dataset::default();
    let mut planted = Vec::new();
    for v in 0..spec.n_videos {
        let subject_id = format!("s{:02}", v % spec.n_subjects);
        let video_id = format!("{subject_id}_v{v:02}");
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(v as u64);

        let mut shared = ChaCha8Rng::seed_from_u64(spec.seed);
        shared.set_stream(u64::MAX);
        let texture = Texture::random(&mut shared, &mut rng, spec.width, spec.height);

        // one movement per equal slot of the video, never overlapping
        let slot = spec.frames_per_video / spec.movements_per_video;
        let mut movements = Vec::with_capacity(spec.movements_per_video);
        for m in 0..spec.movements_per_video {
            let duration = rng.random_range(spec.duration_min..=spec.duration_max);
            let slack = slot - duration - 2;
            let start = m * slot + 1 + rng.random_range(0..=slack);
            let roi = RoiTarget::ALL[rng.random_range(0..3)];
            movements.push((roi, start, duration));
        }

        let background: Vec<f64> = (0..spec.height)
            .flat_map(|y| (0..spec.width).map(move |x| (x, y)))
            .map(|(x, y)| texture.sample(x as f64, y as f64))
            .collect();

        let radius = 0.2 * iod;
        let mut frames = Vec::with_capacity(spec.frames_per_video);
        for f in 0..spec.frames_per_video {
            let mut pixels = background.clone();
            let mut displacement: Vec<f64> = Vec::new();
            for &(roi, start, duration) in &movements {
                let amp = spec.amplitude * envelope(f, start, duration);
                if amp == 0.0 {
                    continue;
                }
                if displacement.is_empty() {
                    displacement = vec![0.0; spec.width * spec.height];
                }
                for c in bump_centres(roi, &layout) {
                    add_bump(&mut displacement, spec.width, spec.height, c, radius, amp);
                }
            }
            for (idx, &w) in displacement.iter().enumerate() {
                if w > 1e-9 {
                    let (x, y) = ((idx % spec.width) as f64, (idx / spec.width) as f64);
                    pixels[idx] = texture.sample(x - w * direction.0, y - w * direction.1);
                }
            }
            let data = pixels
                .into_iter()
                .map(|p| {
                    let noisy = if spec.noise_std > 0.0 {
                        p + noise.sample(&mut rng)
                    } else {
                        p
                    };
                    ((noisy.clamp(0.0, 1.0) * 255.0).round() / 255.0) as f32
                })
                .collect();
            frames.push(GrayFrame::new(spec.width, spec.height, data)?);
        }

        for &(roi, start, duration) in &movements {
            let apex = start + (duration - 1) / 2;
            dataset.ground_truth.push(GroundTruthEntry {
                subject_id: subject_id.clone(),
                video_id: video_id.clone(),
                onset: start + 1,
                apex: apex + 1,
                offset: start + duration,
                au_codes: format!("{roi:?}"),
            });
            planted.push(PlantedMovement {
                video_id: video_id.clone(),
                roi,
                interval: FrameInterval::new(start, start + duration),
                apex,
                direction,
            });
        }
        dataset.sequences.push(FrameSequence::new(
            &video_id,
            &subject_id,
            spec.fps,
            frames,
        )?);
        dataset
            .landmarks
            .push(LandmarkSet::static_layout(&video_id, layout));
    }
    Ok(SyntheticDataset { dataset, planted })
}

fn layout_iod(layout: &Landmarks) -> f64 {
    let mean = |r: std::ops::Range<usize>| {
        let (sx, sy) = r.clone().fold((0.0, 0.0), |(sx, sy), i| {
            (sx + layout[i].x, sy + layout[i].y)
        });
        Point::new(sx / 6.0, sy / 6.0)
    };
    mean(36..42).distance(&mean(42..48))
}

/// Adds a Gaussian displacement magnitude `amp * exp(-r²/2σ²)` around
/// `centre` to the per-pixel field.
fn add_bump(field: &mut [f64], width: usize, height: usize, centre: Point, sigma: f64, amp: f64) {
    let reach = (4.0 * sigma).ceil() as isize;
    let (cx, cy) = (centre.x.round() as isize, centre.y.round() as isize);
    for y in (cy - reach).max(0)..(cy + reach + 1).min(height as isize) {
        for x in (cx - reach).max(0)..(cx + reach + 1).min(width as isize) {
            let r2 = (x as f64 - centre.x).powi(2) + (y as f64 - centre.y).powi(2);
            field[y as usize * width + x as usize] += amp * (-r2 / (2.0 * sigma * sigma)).exp();
        }
    }
}
