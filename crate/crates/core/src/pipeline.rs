//! Glue between the stages: dataset to feature caches, caches to labelled
//! training sets, training sets to models.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{FeatureParams, PipelineConfig};
use crate::dataio::{Dataset, FrameSequence, GroundTruthEntry, LandmarkSet};
use crate::error::{Error, Result};
use crate::features::{sequence_from_flows, HoofSequence, VideoFeatures};
use crate::network::{
    train, CheckpointMeta, LstmModel, TrainOutcome, TrainSample, CHECKPOINT_VERSION,
};
use crate::optflow::{flow_pairs_for_window, FlowEstimator, FlowField, HornSchunck};
use crate::preprocess::{
    compute_alignment, extract_rois, eye_centers, generate_windows, rotate_frame,
    AlignmentTransform, RoiSet, WindowInterval,
};
use crate::spotting::{label_windows, nms, score_windows, threshold_detections, Detection};

pub const FEATURE_EXTENSION: &str = "feat";

/// Windows handled per flow batch. Neighbouring windows share most of their
/// frame pairs, so flows are cached across a batch and the one after it.
const WINDOW_BATCH: usize = 8;

/// First 8 bytes of SHA-256 over the canonical JSON of the feature
/// parameters.
pub fn params_hash(params: &FeatureParams) -> [u8; 8] {
    let json = serde_json::to_vec(params).expect("parameters serialize");
    let digest = Sha256::digest(&json);
    digest[..8].try_into().expect("digest is 32 bytes")
}

/// Same frames, same rotation: same flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct FlowKey {
    from: usize,
    to: usize,
    rotation: [u64; 3],
}

impl FlowKey {
    fn new(from: usize, to: usize, t: &AlignmentTransform) -> Self {
        FlowKey {
            from,
            to,
            rotation: [
                t.angle.to_bits(),
                t.center.x.to_bits(),
                t.center.y.to_bits(),
            ],
        }
    }
}

/// Everything decided about a window before any flow is computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub window: WindowInterval,
    pub transform: AlignmentTransform,
    pub rois: RoiSet,
    /// Absolute frame indices of each flow pair.
    pub pairs: Vec<(usize, usize)>,
}

/// Windows, alignment and ROIs for every window of a video.
pub fn plan_video(
    seq: &FrameSequence,
    landmarks: &LandmarkSet,
    params: &FeatureParams,
) -> Result<Vec<WindowPlan>> {
    seq.validate()?;
    let gap = params.flow.gap(seq.fps);
    generate_windows(&seq.video_id, seq.len(), seq.fps, &params.window)?
        .into_iter()
        .map(|w| plan_window(seq, landmarks, w, params, gap))
        .collect()
}

fn plan_window(
    seq: &FrameSequence,
    landmarks: &LandmarkSet,
    window: WindowInterval,
    params: &FeatureParams,
    gap: usize,
) -> Result<WindowPlan> {
    let points = landmarks.for_frame(window.start).ok_or_else(|| {
        Error::Consistency(format!(
            "{}: no landmarks for frame {}",
            seq.video_id, window.start
        ))
    })?;
    let (left, right) = eye_centers(points)?;
    let transform = compute_alignment(left, right, window.start)?;
    let rois = extract_rois(points, &transform, seq.width(), seq.height(), &params.roi)?;
    let pairs = flow_pairs_for_window(&window, gap);
    Ok(WindowPlan {
        window,
        transform,
        rois,
        pairs,
    })
}

/// Features for every window of one video.
pub fn extract_video_features(
    seq: &FrameSequence,
    landmarks: &LandmarkSet,
    params: &FeatureParams,
    estimator: &dyn FlowEstimator,
) -> Result<VideoFeatures> {
    let plans = plan_video(seq, landmarks, params)?;

    let mut cache: HashMap<FlowKey, FlowField> = HashMap::new();
    let mut sequences = Vec::with_capacity(plans.len());
    for (b, batch) in plans.chunks(WINDOW_BATCH).enumerate() {
        let wanted: BTreeSet<(FlowKey, usize)> = batch
            .iter()
            .enumerate()
            .flat_map(|(i, p)| {
                p.pairs
                    .iter()
                    .map(move |&(a, b)| (FlowKey::new(a, b, &p.transform), i))
            })
            .filter(|(k, _)| !cache.contains_key(k))
            .collect();
        let mut todo: Vec<(FlowKey, &AlignmentTransform)> = Vec::new();
        for (key, i) in wanted {
            if todo.last().is_none_or(|(k, _)| *k != key) {
                todo.push((key, &batch[i].transform));
            }
        }
        let computed = todo
            .par_iter()
            .map(|(key, t)| {
                let from = rotate_frame(&seq.frames[key.from], t);
                let to = rotate_frame(&seq.frames[key.to], t);
                estimator.estimate(&from, &to).map(|f| (*key, f))
            })
            .collect::<Result<Vec<_>>>()?;
        cache.extend(computed);

        for p in batch {
            let flows: Vec<&FlowField> = p
                .pairs
                .iter()
                .map(|&(a, b)| &cache[&FlowKey::new(a, b, &p.transform)])
                .collect();
            let mut s = sequence_from_flows(&p.window, &flows, &p.rois, &params.hoof)?;
            // Match what a round trip through the f32 cache file gives back.
            s.data.iter_mut().for_each(|x| *x = f64::from(*x as f32));
            sequences.push(s);
        }
        if let Some(next) = plans.get((b + 1) * WINDOW_BATCH) {
            cache.retain(|k, _| k.from >= next.window.start);
        }
    }

    let steps = sequences.first().map_or(0, |s| s.steps);
    if sequences.iter().any(|s| s.steps != steps) {
        return Err(Error::Consistency(format!(
            "{}: windows differ in step count",
            seq.video_id
        )));
    }
    Ok(VideoFeatures {
        video_id: seq.video_id.clone(),
        subject_id: seq.subject_id.clone(),
        fps: seq.fps,
        steps,
        dims: params.hoof.dims(),
        params_hash: params_hash(params),
        sequences,
    })
}

/// Features for every video, in dataset order, with Horn–Schunck flow.
pub fn extract_dataset_features(
    dataset: &Dataset,
    params: &FeatureParams,
) -> Result<Vec<VideoFeatures>> {
    let estimator = HornSchunck::new(params.flow);
    dataset
        .sequences
        .par_iter()
        .map(|seq| {
            let landmarks = dataset
                .landmarks_for(&seq.video_id)
                .ok_or_else(|| Error::Consistency(format!("{}: no landmarks", seq.video_id)))?;
            let features = extract_video_features(seq, landmarks, params, &estimator)?;
            tracing::info!(video = %seq.video_id, windows = features.sequences.len(), "features extracted");
            Ok(features)
        })
        .collect()
}

/// Sets each window's label from the ground truth of its video.
pub fn label_features(features: &mut [VideoFeatures], ground_truth: &[GroundTruthEntry]) {
    for video in features {
        let windows: Vec<WindowInterval> =
            video.sequences.iter().map(|s| s.window.clone()).collect();
        let own: Vec<GroundTruthEntry> = ground_truth
            .iter()
            .filter(|g| g.video_id == video.video_id)
            .cloned()
            .collect();
        for (s, l) in video
            .sequences
            .iter_mut()
            .zip(label_windows(&windows, &own))
        {
            s.label = Some(l.label);
        }
    }
}

pub fn feature_path(dir: &Path, video_id: &str) -> PathBuf {
    dir.join(format!("{video_id}.{FEATURE_EXTENSION}"))
}

pub fn write_feature_cache(dir: &Path, features: &[VideoFeatures]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    features
        .iter()
        .try_for_each(|f| f.write(&feature_path(dir, &f.video_id)))
}

/// Every cache file in `dir`, sorted by video id. All must carry the same
/// parameter hash.
pub fn read_feature_cache(dir: &Path) -> Result<Vec<VideoFeatures>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == FEATURE_EXTENSION) {
            paths.push(path);
        }
    }
    let mut features = paths
        .iter()
        .map(|p| VideoFeatures::read(p))
        .collect::<Result<Vec<_>>>()?;
    features.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    if let Some(first) = features.first() {
        if let Some(odd) = features.iter().find(|f| f.params_hash != first.params_hash) {
            return Err(Error::Consistency(format!(
                "{} and {} were extracted with different parameters",
                first.video_id, odd.video_id
            )));
        }
    } else {
        return Err(Error::Validation(format!(
            "no .{FEATURE_EXTENSION} files in {}",
            dir.display()
        )));
    }
    Ok(features)
}

/// Labelled windows of the given videos, weight 1 each.
pub fn training_samples<'a>(videos: &[&'a VideoFeatures]) -> Result<Vec<TrainSample<'a>>> {
    videos
        .iter()
        .flat_map(|v| v.sequences.iter().map(move |s| (v, s)))
        .map(|(v, s)| sample(v, s, 1.0))
        .collect()
}

pub fn sample<'a>(
    video: &VideoFeatures,
    seq: &'a HoofSequence,
    weight: f64,
) -> Result<TrainSample<'a>> {
    let label = seq.label.ok_or_else(|| {
        Error::Consistency(format!(
            "{}: window {} is unlabelled",
            video.video_id, seq.window.index
        ))
    })?;
    Ok(TrainSample {
        features: &seq.data,
        steps: seq.steps,
        label,
        weight,
    })
}

/// Trains a freshly initialised network on `samples`.
pub fn fit(samples: &[TrainSample<'_>], config: &PipelineConfig) -> Result<TrainOutcome> {
    let model = LstmModel::initialize(config.network, config.train.seed)?;
    train(model, samples, &config.adam, &config.train)
}

/// Sidecar metadata describing a model trained by [`fit`].
pub fn checkpoint_meta(
    samples: &[TrainSample<'_>],
    outcome: &TrainOutcome,
    config: &PipelineConfig,
) -> CheckpointMeta {
    CheckpointMeta {
        format_version: CHECKPOINT_VERSION,
        architecture: config.network,
        adam: config.adam,
        train: config.train,
        training_samples: samples.len(),
        positive_samples: samples.iter().filter(|s| s.label).count(),
        loss_history: outcome.loss_history.clone(),
    }
}

/// All scored windows of a video and the detections surviving threshold and
/// suppression.
pub fn spot_video(
    features: &VideoFeatures,
    model: &LstmModel,
    threshold: f64,
) -> Result<(Vec<Detection>, Vec<Detection>)> {
    let scored = score_windows(features, model)?;
    let kept = nms(&threshold_detections(scored.clone(), threshold));
    Ok((scored, kept))
}
