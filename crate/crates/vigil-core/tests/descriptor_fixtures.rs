//! The bundled descriptor fixtures exercise each strategy outcome: a
//! surrogate-estimated quantity, a directly observable bound, and a design
//! that must be rejected as not observable.

use std::path::PathBuf;

use vigil_core::descriptor::{
    bind_monitor, load_descriptor, validate_descriptor, BoundMonitor, DescriptorError, Strategy,
};
use vigil_core::monitor::{SigmaConfig, VerdictStatus};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

#[test]
fn detector_fixture_binds_the_study_case() {
    let d = load_descriptor(fixture("detector_fp.descriptor")).unwrap();
    let a = validate_descriptor(&d).unwrap();
    assert_eq!(a.strategy("fp_rate_bound"), Some(Strategy::Surrogate));

    let bound = bind_monitor(&d, &a).unwrap();
    assert_eq!(bound.len(), 1);
    assert_eq!(bound[0].0, "fp_rate_bound");
    match &bound[0].1 {
        BoundMonitor::FpRateMarkov(binding) => {
            assert_eq!(binding.t_fp, 0.018);
            assert_eq!(binding.c1, 0.95);
            assert_eq!(binding.inputs, vec!["detections", "residuals"]);
            assert_eq!(binding.sigma, None);
            let spec = binding.to_spec(SigmaConfig::Fixed(22.0)).unwrap();
            assert_eq!(spec.t_fp, 0.018);
            assert_eq!(spec.c1, 0.95);
        }
        other => panic!("expected the fp-rate binding, got {other:?}"),
    }
}

#[test]
fn thermal_fixture_binds_a_direct_threshold() {
    let d = load_descriptor(fixture("thermal_direct.descriptor")).unwrap();
    let a = validate_descriptor(&d).unwrap();
    assert_eq!(a.strategy("board_temp_bound"), Some(Strategy::Direct));

    let bound = bind_monitor(&d, &a).unwrap();
    match &bound[0].1 {
        BoundMonitor::Threshold(check) => {
            assert_eq!(check.output, "board_temp");
            assert_eq!(check.max, 80.0);
            assert_eq!(check.evaluate(72.0), VerdictStatus::Accept);
            assert_eq!(check.evaluate(80.5), VerdictStatus::Violation);
        }
        other => panic!("expected a threshold check, got {other:?}"),
    }
}

#[test]
fn unobservable_fixture_is_rejected_with_the_redesign_error() {
    let d = load_descriptor(fixture("not_observable.descriptor")).unwrap();
    let err = validate_descriptor(&d).unwrap_err();
    match err {
        DescriptorError::NotObservable { spec } => {
            assert_eq!(spec, "missed_detection_bound");
        }
        other => panic!("expected NotObservable, got {other:?}"),
    }
}

#[test]
fn fixtures_survive_a_serialize_parse_round_trip() {
    for name in [
        "detector_fp.descriptor",
        "thermal_direct.descriptor",
        "not_observable.descriptor",
    ] {
        let d = load_descriptor(fixture(name)).unwrap();
        let text = serde_json::to_string_pretty(&d).unwrap();
        let back = serde_json::from_str(&text).unwrap();
        assert_eq!(d, back, "{name} did not round-trip");
    }
}

#[test]
fn missing_and_malformed_files_are_typed_errors() {
    let err = load_descriptor(fixture("does_not_exist.descriptor")).unwrap_err();
    assert!(matches!(err, DescriptorError::Io { .. }), "{err:?}");

    let path = std::env::temp_dir().join("vigil_malformed_descriptor_test.json");
    std::fs::write(&path, "{\"goal\": \"truncated\"").unwrap();
    let err = load_descriptor(&path).unwrap_err();
    assert!(matches!(err, DescriptorError::Parse { .. }), "{err:?}");
    let _ = std::fs::remove_file(&path);
}
