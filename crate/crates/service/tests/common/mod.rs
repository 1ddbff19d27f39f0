#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use microspot_core::config::PipelineConfig;
use microspot_core::dataio::Dataset;
use microspot_core::dataio::{generate_synthetic, write_dataset, GroundTruthEntry, SyntheticSpec};
use microspot_core::features::VideoFeatures;
use microspot_core::pipeline::{extract_dataset_features, label_features, write_feature_cache};
use microspot_service::{router, ServiceConfig, ServiceState};
use tempfile::TempDir;
use tower::ServiceExt;

/// A synthetic dataset on disk with its feature cache. `truth` is the
/// planted ground truth; the manifest may carry a corrupted copy.
pub struct Fixture {
    _dir: TempDir,
    pub manifest: PathBuf,
    pub features_dir: PathBuf,
    pub dataset: Dataset,
    pub truth: Vec<GroundTruthEntry>,
    /// Features of twice as many videos the service never sees, labelled
    /// with their planted ground truth.
    pub held_out: Vec<VideoFeatures>,
}

impl Fixture {
    fn build(
        spec: &SyntheticSpec,
        corrupt: impl Fn(&[GroundTruthEntry]) -> Vec<GroundTruthEntry>,
    ) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let dataset = generate_synthetic(spec).unwrap().dataset;
        let truth = dataset.ground_truth.clone();
        let on_disk = Dataset {
            ground_truth: corrupt(&truth),
            ..dataset.clone()
        };
        let manifest = write_dataset(&on_disk, &dir.path().join("data")).unwrap();
        let config = pipeline();
        let features = extract_dataset_features(&dataset, &config.features).unwrap();
        let features_dir = dir.path().join("features");
        write_feature_cache(&features_dir, &features).unwrap();
        let unseen_spec = SyntheticSpec {
            seed: spec.seed + 1000,
            n_videos: 2 * spec.n_videos,
            ..spec.clone()
        };
        let unseen = generate_synthetic(&unseen_spec).unwrap().dataset;
        let mut held_out = extract_dataset_features(&unseen, &config.features).unwrap();
        label_features(&mut held_out, &unseen.ground_truth);
        Fixture {
            _dir: dir,
            manifest,
            features_dir,
            dataset,
            truth,
            held_out,
        }
    }

    pub fn config(&self, data_dir: &Path) -> ServiceConfig {
        ServiceConfig {
            data_dir: data_dir.to_path_buf(),
            manifest: self.manifest.clone(),
            features_dir: self.features_dir.clone(),
            initial_model: None,
            pipeline: pipeline(),
        }
    }

    pub fn open(&self, data_dir: &Path) -> Arc<ServiceState> {
        Arc::new(ServiceState::open(self.config(data_dir)).unwrap())
    }

    /// Feature windows labelled with the planted ground truth.
    pub fn true_features(&self, state: &ServiceState) -> Vec<VideoFeatures> {
        let mut features = state.features().to_vec();
        label_features(&mut features, &self.truth);
        features
    }
}

pub fn pipeline() -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.train.batch_size = 8;
    config
}

/// Two subjects, faithful labels.
pub fn small() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let spec = SyntheticSpec {
            n_subjects: 2,
            n_videos: 2,
            frames_per_video: 400,
            movements_per_video: 2,
            ..Default::default()
        };
        Fixture::build(&spec, |gt| gt.to_vec())
    })
}

/// Six videos whose on-disk ground truth also marks two motionless
/// stretches per video as movements.
pub fn noisy() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let spec = SyntheticSpec {
            seed: 11,
            n_subjects: 3,
            n_videos: 6,
            frames_per_video: 800,
            ..Default::default()
        };
        Fixture::build(&spec, |gt| {
            let mut noisy = gt.to_vec();
            for entry in gt
                .iter()
                .filter(|g| g.onset == gt.iter().find(|f| f.video_id == g.video_id).unwrap().onset)
            {
                let own: Vec<&GroundTruthEntry> =
                    gt.iter().filter(|g| g.video_id == entry.video_id).collect();
                let mut added = 0;
                let mut onset = 1;
                while added < 2 && onset + 40 <= 800 {
                    let offset = onset + 39;
                    let clear = own
                        .iter()
                        .all(|g| offset + 100 < g.onset || g.offset + 100 < onset)
                        && noisy
                            .iter()
                            .filter(|g| g.video_id == entry.video_id)
                            .all(|g| offset + 100 < g.onset || g.offset + 100 < onset);
                    if clear {
                        noisy.push(GroundTruthEntry {
                            onset,
                            apex: onset + 20,
                            offset,
                            ..entry.clone()
                        });
                        added += 1;
                    }
                    onset += 20;
                }
            }
            noisy
        })
    })
}

pub async fn call(state: &Arc<ServiceState>, request: Request<Body>) -> (StatusCode, Vec<u8>) {
    let response = router(state.clone()).oneshot(request).await.unwrap();
    let status = response.status();
    let body = response
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, body)
}

pub async fn get(state: &Arc<ServiceState>, uri: &str) -> (StatusCode, Vec<u8>) {
    call(state, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn post_json(state: &Arc<ServiceState>, uri: &str, json: &str) -> (StatusCode, Vec<u8>) {
    let request = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(json.to_string()))
        .unwrap();
    call(state, request).await
}
