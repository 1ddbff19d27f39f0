use microspot_core::config::*;
use std::path::Path;

#[test]
fn empty_file_gives_defaults() {
    let c = PipelineConfig::from_toml("", Path::new("c.toml")).unwrap();
    assert_eq!(c, PipelineConfig::default());
    assert_eq!(c.network.input_dim, 24);
    assert_eq!(c.train.epochs, 50);
}

#[test]
fn round_trip_through_toml() {
    let mut c = PipelineConfig::default();
    c.features.flow.alpha = 3.0;
    c.train.class_weights = microspot_core::network::ClassWeights::Balanced;
    c.service.port = 9000;
    let text = c.to_toml();
    assert_eq!(
        PipelineConfig::from_toml(&text, Path::new("c.toml")).unwrap(),
        c
    );
}

#[test]
fn partial_section_keeps_other_defaults() {
    let c = PipelineConfig::from_toml("[train]\nepochs = 5\n", Path::new("c.toml")).unwrap();
    assert_eq!(c.train.epochs, 5);
    assert_eq!(c.train.batch_size, 32);
}

#[test]
fn invalid_values_are_rejected() {
    for text in [
        "[window]\noverlap_seconds = 0.5\n",
        "[hoof]\nbins = 6\n",
        "[train]\nbatch_size = 0\n",
        "[spotting]\nthreshold = 1.5\n",
        "[bogus]\nx = 1\n",
    ] {
        assert!(
            PipelineConfig::from_toml(text, Path::new("c.toml")).is_err(),
            "{text}"
        );
    }
}
