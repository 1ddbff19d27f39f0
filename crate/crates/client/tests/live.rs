use std::sync::Arc;

use microspot_client::{ClientError, ReviewClient};
use microspot_core::config::PipelineConfig;
use microspot_core::dataio::{generate_synthetic, write_dataset, SyntheticSpec};
use microspot_core::pipeline::{extract_dataset_features, write_feature_cache};
use microspot_core::review::{Decision, ProposalStatus};
use microspot_service::{serve, ServiceConfig, ServiceState};

struct Live {
    client: ReviewClient,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
    _dir: tempfile::TempDir,
}

async fn start() -> Live {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        n_subjects: 2,
        n_videos: 2,
        frames_per_video: 300,
        ..Default::default()
    };
    let dataset = generate_synthetic(&spec).unwrap().dataset;
    let manifest = write_dataset(&dataset, &dir.path().join("data")).unwrap();
    let mut pipeline = PipelineConfig::default();
    pipeline.train.batch_size = 8;
    let features = extract_dataset_features(&dataset, &pipeline.features).unwrap();
    write_feature_cache(&dir.path().join("features"), &features).unwrap();
    let config = ServiceConfig {
        data_dir: dir.path().join("review"),
        manifest,
        features_dir: dir.path().join("features"),
        initial_model: None,
        pipeline,
    };
    let state = Arc::new(
        tokio::task::spawn_blocking(|| ServiceState::open(config))
            .await
            .unwrap()
            .unwrap(),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel();
    let server = tokio::spawn(serve(listener, state, async {
        stopped.await.ok();
    }));
    let client = ReviewClient::new(&format!("http://{addr}")).unwrap();
    Live {
        client,
        stop: Some(stop),
        server,
        _dir: dir,
    }
}

impl Live {
    async fn shutdown(mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        self.server.await.unwrap().unwrap();
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn review_round_trip_over_http() {
    let live = start().await;
    let client = &live.client;
    let videos = client.videos().await.unwrap();
    assert_eq!(videos.len(), 2);

    let png = client.frame(&videos[0].id, 5).await.unwrap();
    assert_eq!(&png[..4], b"\x89PNG");

    let mut pending = Vec::new();
    for v in &videos {
        pending.extend(
            client
                .proposals(&v.id, Some(ProposalStatus::Pending))
                .await
                .unwrap(),
        );
    }
    let target = pending.first().expect("no proposals to review");
    let record = client
        .decide(&target.id, Decision::Reject, "qa")
        .await
        .unwrap();
    assert_eq!(record.decision, Decision::Reject);
    let rejected = client
        .proposals(&target.video_id, Some(ProposalStatus::Rejected))
        .await
        .unwrap();
    assert_eq!(rejected.len(), 1);

    match client.decide(&target.id, Decision::Accept, "qa").await {
        Err(ClientError::Api {
            status: 409,
            message,
        }) => assert!(message.contains("rejected"), "{message}"),
        other => panic!("expected a conflict, got {other:?}"),
    }
    match client.frame(&videos[0].id, videos[0].frame_count).await {
        Err(ClientError::Api { status: 404, .. }) => {}
        other => panic!("expected not found, got {other:?}"),
    }

    let version = client.retrain().await.unwrap();
    assert_eq!(version.version, 2);
    assert_eq!(version.feedback_records, 1);
    let info = client.model().await.unwrap();
    assert_eq!(info.active, 2);
    assert_eq!(info.versions.len(), 2);
    live.shutdown().await;
}

#[tokio::test]
async fn unreachable_service_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let client = ReviewClient::new(&format!("http://{addr}/")).unwrap();
    assert!(matches!(
        client.videos().await,
        Err(ClientError::Transport(_))
    ));
    assert!(matches!(
        ReviewClient::new("not a url"),
        Err(ClientError::BadUrl(_))
    ));
}
