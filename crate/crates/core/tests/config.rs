mod common;

use common::checks;
use subsumm::config::RunConfig;

#[test]
fn defaults_match_golden_fixture() {
    checks::default_constants().unwrap();
}

#[test]
fn desk_config_is_valid() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.json");
    let cfg = RunConfig::load(path).unwrap();
    assert_eq!(cfg.k, 10);
    assert_eq!(cfg.gamma, RunConfig::default().gamma);
}

#[test]
fn unknown_fields_rejected() {
    assert!(RunConfig::from_json(r#"{"kk": 3}"#).is_err());
    assert!(RunConfig::from_json(r#"{"k": 0}"#).is_err());
}
