//! Frame sequences, landmarks and ground truth, plus the on-disk dataset
//! layout and the synthetic generator used for desk-scale testing.
//!
//! Frame indices are 0-based and intervals half-open everywhere inside the
//! crate. Ground-truth tables use 1-based inclusive indices on disk; the only
//! conversion point is [`GroundTruthEntry::interval`].

mod load;
mod synthetic;

pub use load::{
    encode_png, frame_paths, load_dataset, read_frame, read_ground_truth, read_landmarks,
    read_manifest, write_dataset, write_ground_truth, write_landmarks, DatasetManifest,
    ManifestVideo, MANIFEST_FILE,
};
pub use synthetic::{
    generate_synthetic, synthetic_layout, PlantedMovement, RoiTarget, SyntheticDataset,
    SyntheticSpec,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of points in the standard face annotation layout.
pub const LANDMARK_COUNT: usize = 68;

/// A single grayscale frame with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(
                "frame dimensions must be positive".into(),
            ));
        }
        if data.len() != width * height {
            return Err(Error::Validation(format!(
                "frame buffer has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("intensity {v} outside [0, 1]")));
        }
        Ok(GrayFrame {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        GrayFrame {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds a frame from 8-bit samples, mapping `k` to `k / 255`.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| f32::from(b) / 255.0).collect();
        GrayFrame::new(width, height, data)
    }

    /// Quantizes back to 8-bit samples. Exact inverse of [`GrayFrame::from_u8`].
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        f64::from(self.data[y * self.width + x])
    }
}

/// One video: an ordered list of equally sized frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub video_id: String,
    pub subject_id: String,
    pub fps: f64,
    pub frames: Vec<GrayFrame>,
}

impl FrameSequence {
    pub fn new(
        video_id: impl Into<String>,
        subject_id: impl Into<String>,
        fps: f64,
        frames: Vec<GrayFrame>,
    ) -> Result<Self> {
        let seq = FrameSequence {
            video_id: video_id.into(),
            subject_id: subject_id.into(),
            fps,
            frames,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Validation(format!(
                "video {}: fps must be positive, got {}",
                self.video_id, self.fps
            )));
        }
        let first = self
            .frames
            .first()
            .ok_or_else(|| Error::Validation(format!("video {} has no frames", self.video_id)))?;
        if let Some(i) = self
            .frames
            .iter()
            .position(|f| f.width != first.width || f.height != first.height)
        {
            return Err(Error::Validation(format!(
                "video {}: frame {i} is {}x{}, expected {}x{}",
                self.video_id,
                self.frames[i].width,
                self.frames[i].height,
                first.width,
                first.height
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// 68 landmark points, 0-based indices in the usual face layout
/// (jaw 0–16, brows 17–26, nose 27–35, eyes 36–47, mouth 48–67).
pub type Landmarks = [Point; LANDMARK_COUNT];

/// Landmarks for one video, keyed by frame index.
///
/// A set holding only frame 0 is static: the same points apply to every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub video_id: String,
    pub frames: Vec<(usize, Landmarks)>,
}

impl LandmarkSet {
    pub fn static_layout(video_id: impl Into<String>, points: Landmarks) -> Self {
        LandmarkSet {
            video_id: video_id.into(),
            frames: vec![(0, points)],
        }
    }

    pub fn is_static(&self) -> bool {
        self.frames.len() == 1 && self.frames[0].0 == 0
    }

    /// Landmarks for `frame`, falling back to frame 0 in static mode.
    pub fn for_frame(&self, frame: usize) -> Option<&Landmarks> {
        if self.is_static() {
            return Some(&self.frames[0].1);
        }
        self.frames
            .binary_search_by_key(&frame, |(i, _)| *i)
            .ok()
            .map(|i| &self.frames[i].1)
    }

    pub fn validate(&self, frame_count: usize) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Validation(format!(
                "video {}: no landmark rows",
                self.video_id
            )));
        }
        for (idx, points) in &self.frames {
            if *idx >= frame_count {
                return Err(Error::Validation(format!(
                    "video {}: landmarks reference frame {idx} but the video has {frame_count}",
                    self.video_id
                )));
            }
            if points.iter().any(|p| !p.is_finite()) {
                return Err(Error::Validation(format!(
                    "video {}: non-finite landmark in frame {idx}",
                    self.video_id
                )));
            }
        }
        Ok(())
    }
}

/// One annotated micro-movement, 1-based inclusive frame indices as on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub subject_id: String,
    pub video_id: String,
    pub onset: usize,
    pub apex: usize,
    pub offset: usize,
    pub au_codes: String,
}

impl GroundTruthEntry {
    pub fn validate(&self) -> Result<()> {
        if self.onset == 0 {
            return Err(Error::Validation(format!(
                "video {}: onset must be 1-based, got 0",
                self.video_id
            )));
        }
        if !(self.onset <= self.apex && self.apex <= self.offset) {
            return Err(Error::Validation(format!(
                "video {}: expected onset <= apex <= offset, got {}/{}/{}",
                self.video_id, self.onset, self.apex, self.offset
            )));
        }
        Ok(())
    }

    /// The annotated span as a 0-based half-open interval `[onset - 1, offset)`.
    pub fn interval(&self) -> FrameInterval {
        FrameInterval::new(self.onset - 1, self.offset)
    }
}

/// Half-open, 0-based frame interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameInterval {
    pub start: usize,
    pub end: usize,
}

impl FrameInterval {
    pub const fn new(start: usize, end: usize) -> Self {
        FrameInterval { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn intersection_len(&self, other: &FrameInterval) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }

    pub fn intersects(&self, other: &FrameInterval) -> bool {
        self.intersection_len(other) > 0
    }
}

/// Everything loaded for a set of videos, cross-linked by video id.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub sequences: Vec<FrameSequence>,
    pub landmarks: Vec<LandmarkSet>,
    pub ground_truth: Vec<GroundTruthEntry>,
}

impl Dataset {
    pub fn sequence(&self, video_id: &str) -> Option<&FrameSequence> {
        self.sequences.iter().find(|s| s.video_id == video_id)
    }

    pub fn landmarks_for(&self, video_id: &str) -> Option<&LandmarkSet> {
        self.landmarks.iter().find(|l| l.video_id == video_id)
    }

    pub fn ground_truth_for<'a>(
        &'a self,
        video_id: &'a str,
    ) -> impl Iterator<Item = &'a GroundTruthEntry> + 'a {
        self.ground_truth
            .iter()
            .filter(move |g| g.video_id == video_id)
    }

    /// Checks the cross-links: every video has landmarks, every GT row
    /// points at a known video and fits inside it.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for seq in &self.sequences {
            seq.validate()?;
            if !seen.insert(seq.video_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate video id {}",
                    seq.video_id
                )));
            }
            self.landmarks_for(&seq.video_id)
                .ok_or_else(|| {
                    Error::Validation(format!("video {} has no landmarks", seq.video_id))
                })?
                .validate(seq.len())?;
        }
        for gt in &self.ground_truth {
            gt.validate()?;
            let seq = self.sequence(&gt.video_id).ok_or_else(|| {
                Error::Validation(format!(
                    "ground truth references unknown video {}",
                    gt.video_id
                ))
            })?;
            if gt.offset > seq.len() {
                return Err(Error::Validation(format!(
                    "video {}: offset {} beyond frame count {}",
                    gt.video_id,
                    gt.offset,
                    seq.len()
                )));
            }
        }
        Ok(())
    }
}
