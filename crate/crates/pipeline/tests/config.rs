use std::path::Path;

use glioma_pipeline::config::{LossName, PipelineConfig};
use glioma_pipeline::PipelineError;

const MINIMAL: &str = "data:\n  cases_dir: cases\noutput_dir: out\n";

#[test]
fn minimal_config_uses_documented_defaults() {
    let c = PipelineConfig::from_yaml(MINIMAL, Path::new("/base")).unwrap();
    assert_eq!(c.data.cases_dir, Path::new("/base/cases"));
    assert_eq!(c.network.encoder_maps, vec![64, 128, 256]);
    assert_eq!(c.training.loss, LossName::Dice);
    assert_eq!(c.training.learning_rate, 1e-4);
    assert_eq!(c.training.split_fraction, 0.75);
    assert_eq!((c.survival.short_below_days, c.survival.long_above_days), (300.0, 450.0));
    assert_eq!(c.survival.n_trees, 100);
}

fn config_error(yaml: &str) -> (String, String) {
    match PipelineConfig::from_yaml(yaml, Path::new(".")) {
        Err(PipelineError::Config { key, message }) => (key, message),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let (key, msg) = config_error(&format!("{MINIMAL}training:\n  learning_rat: 0.1\n"));
    assert_eq!(key, "training.learning_rat");
    assert!(msg.contains("learning_rat"), "{msg}");
    let (key, _) = config_error(&format!("{MINIMAL}bogus: 1\n"));
    assert_eq!(key, "bogus");
    let (key, _) = config_error(&format!("{MINIMAL}training:\n  focal:\n    alpha: nope\n"));
    assert_eq!(key, "training.focal.alpha");
}

#[test]
fn semantic_errors_name_the_key() {
    assert_eq!(config_error(&format!("{MINIMAL}training:\n  split_fraction: 1.5\n")).0, "training.split_fraction");
    assert_eq!(config_error(&format!("{MINIMAL}training:\n  regions: [ET, WT]\n")).0, "training.regions");
    assert_eq!(
        config_error(&format!("{MINIMAL}survival:\n  short_below_days: 500\n  long_above_days: 400\n")).0,
        "survival.short_below_days"
    );
    assert_eq!(config_error(&format!("{MINIMAL}network:\n  encoder_maps: [8, 4, 2]\n")).0, "network");
    assert_eq!(
        config_error(&format!("{MINIMAL}training:\n  loss: focal\n  focal:\n    alpha: 0\n")).0,
        "training.focal"
    );
}

#[test]
fn hash_ignores_location_but_not_content() {
    let a = PipelineConfig::from_yaml(MINIMAL, Path::new("/x")).unwrap();
    let b = PipelineConfig::from_yaml(MINIMAL, Path::new("/y/z")).unwrap();
    assert_eq!(a.hash(), b.hash());
    let c = PipelineConfig::from_yaml(&format!("{MINIMAL}seed: 3\n"), Path::new("/x")).unwrap();
    assert_ne!(a.hash(), c.hash());
}
