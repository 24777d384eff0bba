use gazehead_core::audio::{load_features, save_features, FeatureSequence};
use gazehead_core::container::{edit_manifest, TensorFile};
use gazehead_core::corpus::{format_manifest, parse_manifest, ManifestEntry};
use gazehead_core::motion::{format_motion, parse_motion, MotionSequence};
use gazehead_core::Error;
use ndarray::Array2;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn motion_text_round_trips_bitwise(
        values in proptest::collection::vec(-40.0..40.0f64, 7 * 9),
        start in 0usize..1000,
    ) {
        let mut seq = MotionSequence::new(Array2::from_shape_vec((9, 7), values).unwrap(), 25, "spk07", "spk07_s1").unwrap();
        seq.start_frame = start;
        let back = parse_motion(&format_motion(&seq, &["reference=x".into()])).unwrap();
        prop_assert_eq!(back, seq);
    }

    #[test]
    fn feature_files_round_trip_bitwise(values in proptest::collection::vec(-30.0f32..5.0, 11 * 5)) {
        let dir = tempfile::tempdir().unwrap();
        let feats = FeatureSequence::new(Array2::from_shape_vec((11, 5), values).unwrap()).unwrap();
        let path = dir.path().join("x.feat");
        save_features(&feats, &path).unwrap();
        prop_assert_eq!(load_features(&path).unwrap(), feats);
    }

    #[test]
    fn containers_round_trip_bitwise(
        a in proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 6),
        b in proptest::collection::vec(-1.0f32..1.0, 8),
    ) {
        let mut file = TensorFile::new("generator", serde_json::json!({"seed": 3}));
        file.push("a", vec![2, 3], a, true);
        file.push("b", vec![2, 2, 2], b, false);
        let bytes = file.to_bytes().unwrap();
        let back = TensorFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        prop_assert_eq!(back, file);
    }
}

fn sample_container() -> Vec<u8> {
    let mut file = TensorFile::new("style_encoder", serde_json::Value::Null);
    file.push("proj.w", vec![7, 4], vec![0.5; 28], true);
    file.push("proj.b", vec![4], vec![0.25; 4], true);
    file.to_bytes().unwrap()
}

#[test]
fn wrong_shape_names_the_tensor() {
    let bytes = edit_manifest(&sample_container(), |v| v["tensors"][1]["shape"] = serde_json::json!([9])).unwrap();
    match TensorFile::from_bytes(&bytes) {
        Err(Error::Format(msg)) => assert!(msg.contains("proj.b"), "{msg}"),
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn future_version_is_rejected() {
    let bytes = edit_manifest(&sample_container(), |v| v["format_version"] = serde_json::json!("7")).unwrap();
    assert!(matches!(TensorFile::from_bytes(&bytes), Err(Error::Version { found, .. }) if found == "7"));
}

#[test]
fn truncation_is_detected() {
    let bytes = sample_container();
    for cut in [0, 5, 20, bytes.len() - 1] {
        assert!(TensorFile::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
    }
}

#[test]
fn manifest_round_trips_and_reports_bad_lines() {
    let entries = vec![
        ManifestEntry {
            motion_path: "motion/a.csv".into(),
            audio_path: "audio/a.wav".into(),
            speaker_id: "spk00".into(),
            session_id: "spk00_s0".into(),
            features_path: None,
        },
        ManifestEntry {
            motion_path: "motion/b.csv".into(),
            audio_path: "audio/b.wav".into(),
            speaker_id: "spk01".into(),
            session_id: "spk01_s0".into(),
            features_path: Some("features/b.feat".into()),
        },
    ];
    let text = format_manifest(&entries).unwrap();
    assert!(!text.lines().next().unwrap().contains("features_path"));
    assert_eq!(parse_manifest(&text).unwrap(), entries);

    let broken = format!("{}not json\n", text);
    assert!(matches!(parse_manifest(&broken), Err(Error::Parse { line: 3, .. })));
    let missing = "{\"motion_path\":\"m.csv\",\"speaker_id\":\"s\",\"session_id\":\"x\"}\n";
    assert!(matches!(parse_manifest(missing), Err(Error::Parse { line: 1, .. })));
    let dup = format!("{}{}", text, text.lines().next().unwrap());
    assert!(parse_manifest(&dup).is_err());
}

#[test]
fn malformed_motion_files_are_rejected() {
    let header = "frame,head_pitch,head_yaw,head_roll,l_eye_pitch,l_eye_yaw,r_eye_pitch,r_eye_yaw";
    let good = format!("# fps=25 speaker=s session=x\n{header}\n0,1,2,3,4,5,6,7\n");
    assert!(parse_motion(&good).is_ok());
    assert!(parse_motion(&good.replace("head_roll", "roll")).is_err());
    assert!(parse_motion(&good.replace("0,1,2,3,4,5,6,7", "0,1,2,3,4,5,6")).is_err());
    assert!(parse_motion(&good.replace("0,1,2,3,4,5,6,7", "0,1,2,x,4,5,6,7")).is_err());
}
