//! Sliding windows, eye-line alignment and region-of-interest extraction.
//!
//! Each window is processed on its own: the landmarks of its first frame fix
//! one rotation that is applied to every frame of the window, and the three
//! regions are cut from the rotated landmarks of that same frame.

use serde::{Deserialize, Serialize};

use crate::dataio::{GrayFrame, Landmarks, Point};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowParams {
    pub window_seconds: f64,
    pub overlap_seconds: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams {
            window_seconds: 0.5,
            overlap_seconds: 0.3,
        }
    }
}

impl WindowParams {
    /// `|W|` in frames.
    pub fn window_len(&self, fps: f64) -> usize {
        (self.window_seconds * fps).round() as usize
    }

    pub fn overlap_len(&self, fps: f64) -> usize {
        (self.overlap_seconds * fps).round() as usize
    }

    pub fn stride(&self, fps: f64) -> usize {
        self.window_len(fps).saturating_sub(self.overlap_len(fps))
    }

    pub fn validate(&self, fps: f64) -> Result<()> {
        let (len, overlap) = (self.window_len(fps), self.overlap_len(fps));
        if overlap == 0 || overlap >= len {
            return Err(Error::Validation(format!(
                "window of {len} frames with overlap {overlap} at {fps} fps: need 0 < overlap < window"
            )));
        }
        Ok(())
    }
}

/// One classification unit: frames `[start, end)` of a video.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowInterval {
    pub video_id: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl WindowInterval {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn interval(&self) -> crate::dataio::FrameInterval {
        crate::dataio::FrameInterval::new(self.start, self.end)
    }
}

/// Windows at `0, stride, 2·stride, …`, plus one end-anchored window when the
/// regular grid stops short of the last frame.
pub fn generate_windows(
    video_id: &str,
    frame_count: usize,
    fps: f64,
    params: &WindowParams,
) -> Result<Vec<WindowInterval>> {
    params.validate(fps)?;
    let len = params.window_len(fps);
    let stride = params.stride(fps);
    if frame_count < len {
        return Err(Error::VideoTooShort {
            frames: frame_count,
            window: len,
        });
    }
    let regular = (frame_count - len) / stride + 1;
    let mut windows: Vec<WindowInterval> = (0..regular)
        .map(|j| WindowInterval {
            video_id: video_id.to_string(),
            index: j,
            start: j * stride,
            end: j * stride + len,
        })
        .collect();
    if windows.last().is_some_and(|w| w.end < frame_count) {
        windows.push(WindowInterval {
            video_id: video_id.to_string(),
            index: regular,
            start: frame_count - len,
            end: frame_count,
        });
    }
    Ok(windows)
}

/// Centres of the image-left (points 36–41) and image-right (42–47) eyes.
pub fn eye_centers(landmarks: &Landmarks) -> Result<(Point, Point)> {
    if landmarks.iter().any(|p| !p.is_finite()) {
        return Err(Error::Validation("non-finite landmark coordinate".into()));
    }
    let mean = |range: std::ops::Range<usize>| {
        let n = range.len() as f64;
        let (sx, sy) = landmarks[range]
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / n, sy / n)
    };
    Ok((mean(36..42), mean(42..48)))
}

/// A rotation by `angle` radians about `center`, estimated from the landmarks
/// of `source_frame` and shared by every frame of its window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTransform {
    pub angle: f64,
    pub center: Point,
    pub source_frame: usize,
}

impl AlignmentTransform {
    pub fn identity(center: Point, source_frame: usize) -> Self {
        AlignmentTransform {
            angle: 0.0,
            center,
            source_frame,
        }
    }

    /// Maps a point of the original frame into aligned coordinates.
    pub fn apply(&self, p: Point) -> Point {
        rotate_about(p, self.center, self.angle)
    }

    /// Maps an aligned point back into the original frame.
    pub fn invert(&self, p: Point) -> Point {
        rotate_about(p, self.center, -self.angle)
    }
}

fn rotate_about(p: Point, c: Point, angle: f64) -> Point {
    let (s, co) = angle.sin_cos();
    let (dx, dy) = (p.x - c.x, p.y - c.y);
    Point::new(c.x + co * dx - s * dy, c.y + s * dx + co * dy)
}

/// Rotation that puts both eye centres on one horizontal line, about their
/// midpoint.
pub fn compute_alignment(
    left: Point,
    right: Point,
    source_frame: usize,
) -> Result<AlignmentTransform> {
    if !(left.is_finite() && right.is_finite()) {
        return Err(Error::Validation("non-finite eye centre".into()));
    }
    if left.distance(&right) < 1e-9 {
        return Err(Error::DegenerateGeometry("eye centres coincide".into()));
    }
    Ok(AlignmentTransform {
        angle: -(right.y - left.y).atan2(right.x - left.x),
        center: Point::new(0.5 * (left.x + right.x), 0.5 * (left.y + right.y)),
        source_frame,
    })
}

/// Rotates every frame by the same transform. Bilinear sampling; samples
/// outside the source frame read as 0.
pub fn apply_alignment(frames: &[GrayFrame], transform: &AlignmentTransform) -> Vec<GrayFrame> {
    frames.iter().map(|f| rotate_frame(f, transform)).collect()
}

pub fn rotate_frame(frame: &GrayFrame, transform: &AlignmentTransform) -> GrayFrame {
    if transform.angle == 0.0 {
        return frame.clone();
    }
    let (w, h) = (frame.width(), frame.height());
    let fetch = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            frame.get(x as usize, y as usize)
        }
    };
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let src = transform.invert(Point::new(x as f64, y as f64));
            let (x0, y0) = (src.x.floor(), src.y.floor());
            let (fx, fy) = (src.x - x0, src.y - y0);
            let (xi, yi) = (x0 as isize, y0 as isize);
            let v = (1.0 - fy) * ((1.0 - fx) * fetch(xi, yi) + fx * fetch(xi + 1, yi))
                + fy * ((1.0 - fx) * fetch(xi, yi + 1) + fx * fetch(xi + 1, yi + 1));
            data.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    GrayFrame::new(w, h, data).expect("rotation preserves dimensions and range")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoiParams {
    /// Brow boxes grow upward and outward by this fraction of the
    /// inter-ocular distance.
    pub brow_margin: f64,
    /// Side of the square mouth-corner boxes, as a fraction of the
    /// inter-ocular distance.
    pub mouth_box_side: f64,
}

impl Default for RoiParams {
    fn default() -> Self {
        RoiParams {
            brow_margin: 0.15,
            mouth_box_side: 0.5,
        }
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn area(&self) -> usize {
        self.x1.saturating_sub(self.x0) * self.y1.saturating_sub(self.y0)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn intersects(&self, other: &PixelRect) -> bool {
        self.x0.max(other.x0) < self.x1.min(other.x1)
            && self.y0.max(other.y0) < self.y1.min(other.y1)
    }

    /// Pixel cover of the float box `[fx0, fx1] × [fy0, fy1]`, clamped to
    /// the frame.
    fn covering(fx0: f64, fy0: f64, fx1: f64, fy1: f64, width: usize, height: usize) -> Self {
        let clamp = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
        PixelRect {
            x0: clamp(fx0.floor(), width),
            y0: clamp(fy0.floor(), height),
            x1: clamp(fx1.floor() + 1.0, width),
            y1: clamp(fy1.floor() + 1.0, height),
        }
    }
}

/// A region of interest; the mouth region is the union of two boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub boxes: Vec<PixelRect>,
}

impl Roi {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.boxes.iter().any(|b| b.contains(x, y))
    }
}

/// The three regions in aligned coordinates: image-left brow, image-right
/// brow, mouth corners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiSet {
    pub regions: [Roi; 3],
}

impl RoiSet {
    pub fn is_pairwise_disjoint(&self) -> bool {
        let boxes: Vec<(usize, &PixelRect)> = self
            .regions
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.boxes.iter().map(move |b| (i, b)))
            .collect();
        boxes.iter().enumerate().all(|(a, (ra, ba))| {
            boxes[a + 1..]
                .iter()
                .all(|(rb, bb)| ra == rb || !ba.intersects(bb))
        })
    }
}

/// Cuts the brow and mouth-corner regions from the aligned landmarks of a
/// window's first frame.
pub fn extract_rois(
    landmarks: &Landmarks,
    transform: &AlignmentTransform,
    width: usize,
    height: usize,
    params: &RoiParams,
) -> Result<RoiSet> {
    let (left, right) = eye_centers(landmarks)?;
    let iod = left.distance(&right);
    if iod < 1e-6 {
        return Err(Error::DegenerateGeometry(
            "inter-ocular distance collapsed".into(),
        ));
    }
    let aligned: Vec<Point> = landmarks.iter().map(|&p| transform.apply(p)).collect();
    let bbox = |range: std::ops::Range<usize>| {
        aligned[range].iter().fold(
            (
                f64::INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            ),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        )
    };
    let margin = params.brow_margin * iod;

    let (x0, y0, x1, y1) = bbox(17..22);
    let left_brow = PixelRect::covering(x0 - margin, y0 - margin, x1, y1, width, height);
    let (x0, y0, x1, y1) = bbox(22..27);
    let right_brow = PixelRect::covering(x0, y0 - margin, x1 + margin, y1, width, height);

    let half = 0.5 * params.mouth_box_side * iod;
    let corner = |p: Point| {
        let clamp = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
        PixelRect {
            x0: clamp((p.x - half).floor(), width),
            y0: clamp((p.y - half).floor(), height),
            x1: clamp((p.x + half).ceil(), width),
            y1: clamp((p.y + half).ceil(), height),
        }
    };
    Ok(RoiSet {
        regions: [
            Roi {
                boxes: vec![left_brow],
            },
            Roi {
                boxes: vec![right_brow],
            },
            Roi {
                boxes: vec![corner(aligned[48]), corner(aligned[54])],
            },
        ],
    })
}
