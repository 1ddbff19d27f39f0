use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use microspot_core::config::PipelineConfig;
use microspot_core::dataio::{
    encode_png, frame_paths, read_frame, read_ground_truth, read_manifest,
};
use microspot_core::features::VideoFeatures;
use microspot_core::network::{read_checkpoint, write_checkpoint, CheckpointMeta, LstmModel};
use microspot_core::pipeline::{
    checkpoint_meta, fit, label_features, read_feature_cache, spot_video, training_samples,
};
use microspot_core::review::{
    feedback_training_set, proposals_from_detections, read_feedback_log, Decision, FeedbackRecord,
    ModelInfo, ModelVersion, Proposal, ProposalBook, ProposalStatus, VideoSummary,
};
use microspot_core::{Error, Result};

pub const FEEDBACK_LOG: &str = "feedback.jsonl";
pub const PROPOSALS_FILE: &str = "proposals.json";
pub const MODELS_DIR: &str = "models";

/// What the service is started on.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Holds the feedback log, the proposal list and the model versions.
    pub data_dir: PathBuf,
    pub manifest: PathBuf,
    pub features_dir: PathBuf,
    /// Becomes version 1 when the model directory is empty. Without it,
    /// version 1 is trained from the ground-truth labels.
    pub initial_model: Option<PathBuf>,
    pub pipeline: PipelineConfig,
}

struct Video {
    summary: VideoSummary,
    frames: Vec<PathBuf>,
}

/// Append-only JSON-lines file; every record is on disk before `append`
/// returns.
struct FeedbackLog {
    file: File,
    path: PathBuf,
    records: usize,
}

impl FeedbackLog {
    fn open(path: PathBuf, records: usize) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(FeedbackLog {
            file,
            path,
            records,
        })
    }

    fn append(&mut self, record: &FeedbackRecord) -> Result<()> {
        let mut line = serde_json::to_vec(record).expect("record serializes");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))?;
        self.records += 1;
        Ok(())
    }
}

struct Models {
    versions: Vec<ModelVersion>,
    active: LstmModel,
}

pub struct ServiceState {
    config: ServiceConfig,
    videos: Vec<Video>,
    features: Vec<VideoFeatures>,
    book: RwLock<ProposalBook>,
    log: Mutex<FeedbackLog>,
    models: RwLock<Models>,
    retraining: tokio::sync::Mutex<()>,
}

fn version_stem(dir: &Path, version: u32) -> PathBuf {
    dir.join(format!("v{version:04}"))
}

fn checkpoint_path(dir: &Path, version: u32) -> PathBuf {
    version_stem(dir, version).with_extension("ckpt")
}

fn version_info_path(dir: &Path, version: u32) -> PathBuf {
    version_stem(dir, version).with_extension("version.json")
}

fn read_versions(dir: &Path) -> Result<Vec<ModelVersion>> {
    let mut versions = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.to_string_lossy().ends_with(".version.json") {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            versions.push(
                serde_json::from_str(&text)
                    .map_err(|e| Error::format("model version", &path, e))?,
            );
        }
    }
    versions.sort_by_key(|v: &ModelVersion| v.version);
    Ok(versions)
}

fn describe(version: u32, meta: &CheckpointMeta, feedback_records: usize) -> ModelVersion {
    ModelVersion {
        version,
        training_samples: meta.training_samples,
        positive_samples: meta.positive_samples,
        feedback_records,
        epochs: meta.loss_history.len(),
        initial_loss: meta.loss_history.first().copied(),
        final_loss: meta.loss_history.last().copied(),
    }
}

/// Writes a new immutable model version; refuses to overwrite.
fn store_version(
    dir: &Path,
    model: &LstmModel,
    meta: &CheckpointMeta,
    info: &ModelVersion,
) -> Result<()> {
    let ckpt = checkpoint_path(dir, info.version);
    if ckpt.exists() {
        return Err(Error::Conflict(format!(
            "model version {} already exists",
            info.version
        )));
    }
    write_checkpoint(&ckpt, model, meta)?;
    let path = version_info_path(dir, info.version);
    let json = serde_json::to_string_pretty(info).expect("version serializes");
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

impl ServiceState {
    /// Loads the dataset index and feature caches, restores model versions
    /// and proposals from `data_dir`, and replays the feedback log.
    pub fn open(config: ServiceConfig) -> Result<Self> {
        config.pipeline.validate()?;
        let data_dir = &config.data_dir;
        std::fs::create_dir_all(data_dir.join(MODELS_DIR)).map_err(|e| Error::io(data_dir, e))?;

        let manifest = read_manifest(&config.manifest)?;
        let base = config.manifest.parent().unwrap_or(Path::new("."));
        let ground_truth = read_ground_truth(&base.join(&manifest.ground_truth))?;
        let mut features = read_feature_cache(&config.features_dir)?;
        label_features(&mut features, &ground_truth);

        let mut videos = Vec::with_capacity(manifest.videos.len());
        for v in &manifest.videos {
            if !features.iter().any(|f| f.video_id == v.video_id) {
                return Err(Error::Consistency(format!(
                    "no feature cache for video {}",
                    v.video_id
                )));
            }
            let frames = frame_paths(&base.join(&v.frames_dir))?;
            let first = read_frame(&frames[0])?;
            videos.push(Video {
                summary: VideoSummary {
                    id: v.video_id.clone(),
                    subject_id: v.subject_id.clone(),
                    fps: v.fps,
                    frame_count: frames.len(),
                    width: first.width(),
                    height: first.height(),
                    proposals: Default::default(),
                },
                frames,
            });
        }

        let models = Self::open_models(&config, &features)?;
        let proposals = Self::open_proposals(
            data_dir,
            &features,
            &models.active,
            config.pipeline.spotting.threshold,
        )?;
        let mut book = ProposalBook::new(proposals)?;
        let records = read_feedback_log(&data_dir.join(FEEDBACK_LOG))?;
        book.replay(&records)?;
        tracing::info!(
            videos = videos.len(),
            proposals = book.all().len(),
            feedback = records.len(),
            model = models.versions.last().map_or(0, |v| v.version),
            "service state restored"
        );
        let log = FeedbackLog::open(data_dir.join(FEEDBACK_LOG), records.len())?;
        Ok(ServiceState {
            config,
            videos,
            features,
            book: RwLock::new(book),
            log: Mutex::new(log),
            models: RwLock::new(models),
            retraining: tokio::sync::Mutex::new(()),
        })
    }

    fn open_models(config: &ServiceConfig, features: &[VideoFeatures]) -> Result<Models> {
        let dir = config.data_dir.join(MODELS_DIR);
        let mut versions = read_versions(&dir)?;
        if versions.is_empty() {
            let (model, meta) = match &config.initial_model {
                Some(path) => {
                    let (model, meta) = read_checkpoint(path)?;
                    let meta = meta.ok_or_else(|| {
                        Error::Consistency(format!("{} has no metadata sidecar", path.display()))
                    })?;
                    (model, meta)
                }
                None => {
                    let refs: Vec<&VideoFeatures> = features.iter().collect();
                    let samples = training_samples(&refs)?;
                    let outcome = fit(&samples, &config.pipeline)?;
                    let meta = checkpoint_meta(&samples, &outcome, &config.pipeline);
                    (outcome.model, meta)
                }
            };
            let info = describe(1, &meta, 0);
            store_version(&dir, &model, &meta, &info)?;
            versions.push(info);
        }
        let latest = versions.last().expect("at least one version").version;
        let (active, _) = read_checkpoint(&checkpoint_path(&dir, latest))?;
        Ok(Models { versions, active })
    }

    fn open_proposals(
        data_dir: &Path,
        features: &[VideoFeatures],
        model: &LstmModel,
        threshold: f64,
    ) -> Result<Vec<Proposal>> {
        let path = data_dir.join(PROPOSALS_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => {
                serde_json::from_str(&text).map_err(|e| Error::format("proposals", &path, e))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let mut kept = Vec::new();
                for video in features {
                    kept.extend(spot_video(video, model, threshold)?.1);
                }
                let proposals = proposals_from_detections(&kept);
                let json = serde_json::to_string_pretty(&proposals).expect("proposals serialize");
                std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
                Ok(proposals)
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    fn video(&self, id: &str) -> Result<&Video> {
        self.videos
            .iter()
            .find(|v| v.summary.id == id)
            .ok_or_else(|| Error::NotFound(format!("video {id}")))
    }

    pub fn videos(&self) -> Vec<VideoSummary> {
        let book = self.book.read().expect("proposal lock");
        self.videos
            .iter()
            .map(|v| VideoSummary {
                proposals: book.counts(&v.summary.id),
                ..v.summary.clone()
            })
            .collect()
    }

    pub fn proposals(
        &self,
        video_id: &str,
        status: Option<ProposalStatus>,
    ) -> Result<Vec<Proposal>> {
        self.video(video_id)?;
        Ok(self
            .book
            .read()
            .expect("proposal lock")
            .list(Some(video_id), status))
    }

    /// Proposals of every video, most confident first.
    pub fn all_proposals(&self, status: Option<ProposalStatus>) -> Vec<Proposal> {
        self.book.read().expect("proposal lock").list(None, status)
    }

    /// The frame as a lossless 8-bit grayscale PNG.
    pub fn frame_png(&self, video_id: &str, index: usize) -> Result<Vec<u8>> {
        let video = self.video(video_id)?;
        let path = video.frames.get(index).ok_or_else(|| {
            Error::NotFound(format!(
                "frame {index} of {video_id} ({} frames)",
                video.frames.len()
            ))
        })?;
        Ok(encode_png(&read_frame(path)?))
    }

    /// Records a decision. The log is the single writer: the record is
    /// durable before the in-memory status changes.
    pub fn decide(
        &self,
        proposal_id: &str,
        decision: Decision,
        annotator: &str,
    ) -> Result<FeedbackRecord> {
        let mut log = self.log.lock().expect("feedback log lock");
        self.book
            .read()
            .expect("proposal lock")
            .check_pending(proposal_id)?;
        let record = FeedbackRecord {
            proposal_id: proposal_id.to_string(),
            decision,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            annotator: annotator.to_string(),
        };
        log.append(&record)?;
        self.book.write().expect("proposal lock").apply(&record)?;
        tracing::info!(proposal = proposal_id, ?decision, "decision recorded");
        Ok(record)
    }

    pub fn feedback_count(&self) -> usize {
        self.log.lock().expect("feedback log lock").records
    }

    pub fn model_info(&self) -> ModelInfo {
        let models = self.models.read().expect("model lock");
        ModelInfo {
            active: models.versions.last().map_or(0, |v| v.version),
            versions: models.versions.clone(),
        }
    }

    pub fn active_model(&self) -> LstmModel {
        self.models.read().expect("model lock").active.clone()
    }

    /// Trains a new version from a fresh seeded initialisation on the
    /// ground-truth labels overridden by every decision so far. The same log
    /// always yields the same weights. On failure the previous version stays
    /// active.
    pub async fn retrain(self: &std::sync::Arc<Self>) -> Result<ModelVersion> {
        let _one_at_a_time = self.retraining.lock().await;
        let (book, records) = {
            let log = self.log.lock().expect("feedback log lock");
            (
                self.book.read().expect("proposal lock").clone(),
                log.records,
            )
        };
        if records == 0 {
            return Err(Error::Precondition("no feedback recorded yet".into()));
        }
        let state = self.clone();
        tokio::task::spawn_blocking(move || state.train_version(&book, records))
            .await
            .map_err(|e| Error::Consistency(format!("retraining task failed: {e}")))?
    }

    fn train_version(&self, book: &ProposalBook, records: usize) -> Result<ModelVersion> {
        let pipeline = &self.config.pipeline;
        let samples =
            feedback_training_set(&self.features, book, pipeline.service.hard_negative_weight)?;
        let outcome = fit(&samples, pipeline)?;
        let meta = checkpoint_meta(&samples, &outcome, pipeline);
        let dir = self.config.data_dir.join(MODELS_DIR);
        let version = self.model_info().active + 1;
        let info = describe(version, &meta, records);
        store_version(&dir, &outcome.model, &meta, &info)?;
        let mut models = self.models.write().expect("model lock");
        models.versions.push(info.clone());
        models.active = outcome.model;
        tracing::info!(version, samples = samples.len(), "model retrained");
        Ok(info)
    }

    pub fn features(&self) -> &[VideoFeatures] {
        &self.features
    }
}
