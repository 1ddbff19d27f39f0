//! Window labelling, inference over a video's windows and greedy
//! non-maximum suppression.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{FrameInterval, GroundTruthEntry};
use crate::error::{Error, Result};
use crate::features::VideoFeatures;
use crate::network::LstmModel;
use crate::preprocess::WindowInterval;

/// Minimum share of a ground-truth interval a window must cover to count
/// as containing it.
pub const COVERAGE_THRESHOLD: f64 = 0.8;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub window: WindowInterval,
    /// Positive-class probability.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub window: WindowInterval,
    pub label: bool,
    /// Index into the ground-truth slice of the best-covered interval.
    pub matched: Option<usize>,
}

/// `|window ∩ target| / |target|`.
pub fn overlap_ratio(window: &FrameInterval, target: &FrameInterval) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::Validation(format!(
            "empty target interval [{}, {})",
            target.start, target.end
        )));
    }
    Ok(window.intersection_len(target) as f64 / target.len() as f64)
}

pub fn covers(window: &FrameInterval, target: &FrameInterval) -> bool {
    overlap_ratio(window, target).is_ok_and(|r| r >= COVERAGE_THRESHOLD)
}

/// Labels each window true when it covers at least 80% of some ground-truth
/// interval of the same video. The match is the highest-ratio interval,
/// earliest on ties.
pub fn label_windows(
    windows: &[WindowInterval],
    ground_truth: &[GroundTruthEntry],
) -> Vec<LabeledWindow> {
    windows
        .iter()
        .map(|w| {
            let span = w.interval();
            let best = ground_truth
                .iter()
                .enumerate()
                .filter(|(_, g)| g.video_id == w.video_id)
                .filter_map(|(i, g)| overlap_ratio(&span, &g.interval()).ok().map(|r| (i, r)))
                .filter(|&(_, r)| r >= COVERAGE_THRESHOLD)
                .fold(None, |acc: Option<(usize, f64)>, (i, r)| match acc {
                    Some((_, best)) if best >= r => acc,
                    _ => Some((i, r)),
                });
            LabeledWindow {
                window: w.clone(),
                label: best.is_some(),
                matched: best.map(|(i, _)| i),
            }
        })
        .collect()
}

/// Confidence for every window of a video, in window order.
pub fn score_windows(features: &VideoFeatures, model: &LstmModel) -> Result<Vec<Detection>> {
    if features.dims != model.arch.input_dim {
        return Err(Error::Consistency(format!(
            "{}: features have {} dims, model expects {}",
            features.video_id, features.dims, model.arch.input_dim
        )));
    }
    features
        .sequences
        .iter()
        .map(|s| {
            if s.data.len() != s.steps * s.dims || s.steps == 0 {
                return Err(Error::Consistency(format!(
                    "{}: window {} has a missing or short feature block",
                    features.video_id, s.window.index
                )));
            }
            let confidence = model.predict(&s.data, s.steps)?;
            Ok(Detection {
                window: s.window.clone(),
                confidence,
            })
        })
        .collect()
}

/// Windows whose confidence reaches `threshold` (inclusive).
pub fn spot(features: &VideoFeatures, model: &LstmModel, threshold: f64) -> Result<Vec<Detection>> {
    Ok(threshold_detections(
        score_windows(features, model)?,
        threshold,
    ))
}

pub fn threshold_detections(scored: Vec<Detection>, threshold: f64) -> Vec<Detection> {
    scored
        .into_iter()
        .filter(|d| d.confidence >= threshold)
        .collect()
}

/// Greedy suppression: keep the most confident detection, drop everything
/// intersecting it, repeat. Ties go to the earlier start. Output is sorted
/// by start.
pub fn nms(detections: &[Detection]) -> Vec<Detection> {
    let mut order: Vec<&Detection> = detections.iter().collect();
    order.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.window.start.cmp(&b.window.start))
            .then(a.window.end.cmp(&b.window.end))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        let span = d.window.interval();
        if kept.iter().all(|k| !k.window.interval().intersects(&span)) {
            kept.push(d.clone());
        }
    }
    kept.sort_by_key(|d| (d.window.start, d.window.end));
    kept
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub video: String,
    pub start: usize,
    pub end: usize,
    pub confidence: f64,
    pub kept: bool,
}

/// Pre-NMS detections with a `kept` flag marking the NMS survivors.
pub fn detection_rows(all: &[Detection], kept: &[Detection]) -> Vec<DetectionRow> {
    all.iter()
        .map(|d| DetectionRow {
            video: d.window.video_id.clone(),
            start: d.window.start,
            end: d.window.end,
            confidence: d.confidence,
            kept: kept.iter().any(|k| k.window == d.window),
        })
        .collect()
}

pub fn write_detections_csv(path: &Path, rows: &[DetectionRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(Vec::new());
    for row in rows {
        out.serialize(row)
            .map_err(|e| Error::format("detections", path, e.to_string()))?;
    }
    let bytes = out
        .into_inner()
        .map_err(|e| Error::format("detections", path, e.to_string()))?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}

pub fn read_detections_csv(path: &Path) -> Result<Vec<DetectionRow>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::format("detections", path, e.to_string()))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::format("detections", path, e.to_string())))
        .collect()
}
