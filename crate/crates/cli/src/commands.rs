use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use microspot_core::config::{FeatureParams, PipelineConfig};
use microspot_core::dataio::{
    generate_synthetic, load_dataset, read_ground_truth, read_manifest, write_dataset,
    GroundTruthEntry, SyntheticSpec, MANIFEST_FILE,
};
use microspot_core::evaluation::{run_loso_evaluation, write_report};
use microspot_core::features::VideoFeatures;
use microspot_core::network::{read_checkpoint, write_checkpoint, ClassWeights};
use microspot_core::pipeline::{
    checkpoint_meta, extract_dataset_features, fit, label_features, params_hash, plan_video,
    read_feature_cache, spot_video, training_samples, write_feature_cache,
};
use microspot_core::spotting::{detection_rows, write_detections_csv};
use microspot_service::{ServiceConfig, ServiceState};

use crate::args::*;

/// Config file, then `--seed`.
pub fn base_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
    }
    Ok(config)
}

fn apply_window(features: &mut FeatureParams, flags: &WindowFlags) {
    if let Some(v) = flags.window_sec {
        features.window.window_seconds = v;
    }
    if let Some(v) = flags.overlap_sec {
        features.window.overlap_seconds = v;
    }
}

fn apply_features(features: &mut FeatureParams, flags: &FeatureFlags) {
    apply_window(features, &flags.window);
    let flow = &mut features.flow;
    if let Some(v) = flags.flow_alpha {
        flow.alpha = v;
    }
    if let Some(v) = flags.flow_iters {
        flow.max_iterations = v;
    }
    if let Some(v) = flags.flow_tol {
        flow.tolerance = v;
    }
    if let Some(v) = flags.flow_sigma {
        flow.sigma = v;
    }
}

fn apply_train(config: &mut PipelineConfig, flags: &TrainFlags) -> Result<()> {
    if let Some(v) = flags.epochs {
        config.train.epochs = v;
    }
    if let Some(v) = flags.lr {
        config.adam.learning_rate = v;
    }
    if let Some(v) = flags.batch {
        config.train.batch_size = v;
    }
    if let Some(v) = &flags.class_weights {
        config.train.class_weights = v.parse::<ClassWeights>().map_err(anyhow::Error::msg)?;
    }
    Ok(())
}

fn manifest_path(arg: &DatasetArg) -> PathBuf {
    if arg.dataset.is_dir() {
        arg.dataset.join(MANIFEST_FILE)
    } else {
        arg.dataset.clone()
    }
}

fn ground_truth(manifest: &Path) -> Result<Vec<GroundTruthEntry>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    Ok(read_ground_truth(
        &base.join(read_manifest(manifest)?.ground_truth),
    )?)
}

fn labelled_cache(dir: &Path, manifest: &Path) -> Result<Vec<VideoFeatures>> {
    let mut features = read_feature_cache(dir)?;
    if features.is_empty() {
        bail!("no feature caches in {}", dir.display());
    }
    label_features(&mut features, &ground_truth(manifest)?);
    Ok(features)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let defaults = SyntheticSpec::default();
    let spec = SyntheticSpec {
        seed: cli.seed.unwrap_or(defaults.seed),
        n_subjects: args.subjects.unwrap_or(defaults.n_subjects),
        n_videos: args.videos.unwrap_or(defaults.n_videos),
        frames_per_video: args.frames.unwrap_or(defaults.frames_per_video),
        movements_per_video: args.movements.unwrap_or(defaults.movements_per_video),
        amplitude: args.amplitude.unwrap_or(defaults.amplitude),
        noise_std: args.noise.unwrap_or(defaults.noise_std),
        ..defaults
    };
    let synthetic = generate_synthetic(&spec)?;
    let manifest = write_dataset(&synthetic.dataset, &args.out)?;
    write_json(&args.out.join("synthetic.json"), &spec)?;
    write_json(&args.out.join("planted.json"), &synthetic.planted)?;
    tracing::info!(videos = spec.n_videos, manifest = %manifest.display(), "synthetic dataset written");
    Ok(())
}

pub fn preprocess(cli: &Cli, args: &PreprocessArgs) -> Result<()> {
    let mut config = base_config(cli)?;
    apply_window(&mut config.features, &args.window);
    config.validate()?;
    let dataset = load_dataset(&manifest_path(&args.dataset))?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for seq in &dataset.sequences {
        let landmarks = dataset
            .landmarks_for(&seq.video_id)
            .with_context(|| format!("{}: no landmarks", seq.video_id))?;
        let plans = plan_video(seq, landmarks, &config.features)?;
        write_json(
            &args.out.join(format!("{}.plan.json", seq.video_id)),
            &plans,
        )?;
        tracing::info!(video = %seq.video_id, windows = plans.len(), "windows planned");
    }
    Ok(())
}

pub fn extract_features(cli: &Cli, args: &ExtractArgs) -> Result<()> {
    let mut config = base_config(cli)?;
    apply_features(&mut config.features, &args.features);
    config.validate()?;
    let dataset = load_dataset(&manifest_path(&args.dataset))?;
    let features = extract_dataset_features(&dataset, &config.features)?;
    write_feature_cache(&args.out, &features)?;
    let hash: String = params_hash(&config.features)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    tracing::info!(videos = features.len(), params = %hash, "feature caches written");
    Ok(())
}

pub fn train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let mut config = base_config(cli)?;
    apply_train(&mut config, &args.train)?;
    config.validate()?;
    let features = labelled_cache(&args.features, &manifest_path(&args.dataset))?;
    let refs: Vec<&VideoFeatures> = features.iter().collect();
    let samples = training_samples(&refs)?;
    let outcome = fit(&samples, &config)?;
    let meta = checkpoint_meta(&samples, &outcome, &config);
    write_checkpoint(&args.out, &outcome.model, &meta)?;
    tracing::info!(
        samples = meta.training_samples,
        positives = meta.positive_samples,
        final_loss = meta.loss_history.last().copied().unwrap_or(f64::NAN),
        "model trained"
    );
    Ok(())
}

pub fn spot(cli: &Cli, args: &SpotArgs) -> Result<()> {
    let config = base_config(cli)?;
    let threshold = args.threshold.unwrap_or(config.spotting.threshold);
    if !(0.0..=1.0).contains(&threshold) {
        bail!("threshold {threshold} is outside [0, 1]");
    }
    let (model, _) = read_checkpoint(&args.model)?;
    let features = read_feature_cache(&args.features)?;
    let mut rows = Vec::new();
    for video in &features {
        let (scored, kept) = spot_video(video, &model, threshold)?;
        tracing::info!(video = %video.video_id, windows = scored.len(), detections = kept.len(), "spotted");
        rows.extend(detection_rows(&scored, &kept));
    }
    write_detections_csv(&args.out, &rows)?;
    Ok(())
}

pub fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let mut config = base_config(cli)?;
    apply_features(&mut config.features, &args.feature_flags);
    apply_train(&mut config, &args.train)?;
    if let Some(t) = args.threshold {
        config.spotting.threshold = t;
    }
    config.validate()?;
    let manifest = manifest_path(&args.dataset);
    let features = match &args.features {
        Some(dir) => labelled_cache(dir, &manifest)?,
        None => {
            let dataset = load_dataset(&manifest)?;
            let mut features = extract_dataset_features(&dataset, &config.features)?;
            label_features(&mut features, &dataset.ground_truth);
            features
        }
    };
    let report = run_loso_evaluation(&features, &ground_truth(&manifest)?, &config)?;
    write_report(&args.out, &report)?;
    print_json(&serde_json::json!({
        "tp": report.tp,
        "fp": report.fp,
        "fn": report.fn_,
        "recall": report.metrics.recall,
        "precision": report.metrics.precision,
        "f1": report.metrics.f1,
        "auc": report.auc,
    }))
}

pub fn serve(cli: &Cli, args: &ServeArgs) -> Result<()> {
    let mut pipeline = base_config(cli)?;
    microspot_service::apply_env(&mut pipeline.service)?;
    if let Some(dir) = &args.data_dir {
        pipeline.service.data_dir = dir.clone();
    }
    if let Some(port) = args.port {
        pipeline.service.port = port;
    }
    let addr = format!("{}:{}", args.host, pipeline.service.port);
    let config = ServiceConfig {
        data_dir: pipeline.service.data_dir.clone(),
        manifest: manifest_path(&args.dataset),
        features_dir: args.features.clone(),
        initial_model: args.model.clone(),
        pipeline,
    };
    let state = Arc::new(ServiceState::open(config)?);
    tokio::runtime::Runtime::new()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        let shutdown = async {
            tokio::signal::ctrl_c().await.ok();
            tracing::info!("shutting down");
        };
        microspot_service::serve(listener, state, shutdown).await?;
        Ok(())
    })
}
