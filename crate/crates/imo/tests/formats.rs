use std::fs;
use std::path::{Path, PathBuf};

use imo::format::{read_dataset, read_states, read_waypoints, write_dataset, DataError};
use imo::weights::{load_weights, parse_weights, save_weights, weights_to_json, WeightError};
use imo_core::sim::{simulate, SimConfig, TrackKind, RACETRACK_WAYPOINTS};
use imo_core::tcn::{Normalization, TcnMeta, TcnModel, Tensor};
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture_json() -> Value {
    serde_json::from_str(&fs::read_to_string(fixtures().join("tcn_fixture_weights.json")).unwrap()).unwrap()
}

#[test]
fn dataset_round_trips_exactly() {
    let cfg = SimConfig::new(TrackKind::Racetrack, 3.0, 11);
    let ds = simulate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &ds, &cfg).unwrap();
    let (back, meta) = read_dataset(dir.path()).unwrap();
    assert_eq!(back.imu, ds.imu);
    assert_eq!(back.cmds, ds.cmds);
    assert_eq!(back.gt.len(), ds.gt.len());
    for (a, b) in back.gt.iter().zip(&ds.gt) {
        assert_eq!((a.t, a.position, a.velocity), (b.t, b.position, b.velocity));
        assert_eq!((a.accel_bias, a.gyro_bias), (b.accel_bias, b.gyro_bias));
        assert!(a.attitude.boxminus(&b.attitude).norm() < 1e-12);
    }
    assert_eq!(meta.seed, 11);
    assert_eq!(meta.track, "racetrack");
    assert_eq!(meta.format_version, 1);
}

#[test]
fn malformed_rows_name_file_and_line() {
    let cfg = SimConfig::new(TrackKind::default_lemniscate(), 1.0, 1);
    let ds = simulate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &ds, &cfg).unwrap();
    let imu = dir.path().join("imu.csv");
    let mut lines: Vec<String> = fs::read_to_string(&imu).unwrap().lines().map(String::from).collect();
    lines[4] = lines[4].replacen(',', ",abc,", 1);
    fs::write(&imu, lines.join("\n")).unwrap();
    let err = read_dataset(dir.path()).unwrap_err();
    assert_eq!(err.path, imu);
    assert_eq!(err.line, Some(5));
    assert!(err.to_string().contains("imu.csv:5"), "{err}");
}

#[test]
fn missing_and_unnormalized_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let err: DataError = read_dataset(dir.path()).unwrap_err();
    assert!(err.path.ends_with("meta.json"));

    let gt = dir.path().join("gt.csv");
    fs::write(
        &gt,
        "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,bax,bay,baz,bgx,bgy,bgz\n0,0,0,0,2,0,0,0,0,0,0,0,0,0,0,0,0\n",
    )
    .unwrap();
    let err = read_states(&gt).unwrap_err();
    assert_eq!(err.line, Some(2));
    assert!(err.reason.contains("quaternion"));
}

#[test]
fn racetrack_fixture_matches_builtin_waypoints() {
    let points = read_waypoints(&fixtures().join("racetrack.csv")).unwrap();
    assert_eq!(points.len(), RACETRACK_WAYPOINTS.len());
    for (p, q) in points.iter().zip(RACETRACK_WAYPOINTS) {
        assert_eq!([p.x, p.y, p.z], q);
    }
}

#[test]
fn weights_round_trip_through_json() {
    let model = load_weights(&fixtures().join("tcn_fixture_weights.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.json");
    save_weights(&model, &path).unwrap();
    let back = load_weights(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1, "temporary file left behind");
}

#[test]
fn default_architecture_serializes() {
    let meta = TcnMeta::default();
    let tensors = meta
        .tensor_shapes()
        .into_iter()
        .map(|(name, shape)| (name, Tensor::zeros(shape)))
        .collect();
    let model = TcnModel::from_tensors(meta, Normalization::identity(6), &tensors).unwrap();
    let back = parse_weights(&weights_to_json(&model), Path::new("mem")).unwrap();
    assert_eq!(back, model);
}

fn load_text(text: &str) -> Result<TcnModel, WeightError> {
    parse_weights(text, Path::new("w.json"))
}

#[test]
fn bare_nan_is_blamed_on_its_tensor() {
    let mut doc = fixture_json();
    doc["tensors"]["block1.conv2.bias"]["data"][3] = Value::String("__X__".into());
    let poisoned = serde_json::to_string(&doc).unwrap().replace("\"__X__\"", "NaN");
    match load_text(&poisoned) {
        Err(WeightError::Model {
            source: imo_core::Error::Load { tensor, .. },
            ..
        }) => assert_eq!(tensor, "block1.conv2.bias"),
        other => panic!("unexpected {other:?}"),
    }

    let inf = serde_json::to_string(&doc).unwrap().replace("\"__X__\"", "-Infinity");
    assert!(load_text(&inf).unwrap_err().to_string().contains("block1.conv2.bias"));
}

#[test]
fn structural_errors() {
    let mut doc = fixture_json();
    doc["format_version"] = 2.into();
    assert!(matches!(load_text(&doc.to_string()), Err(WeightError::Version { found: 2, .. })));

    let mut doc = fixture_json();
    doc["tensors"]["head.weight"]["shape"] = serde_json::json!([8, 3]);
    let err = load_text(&doc.to_string()).unwrap_err().to_string();
    assert!(err.contains("head.weight") && err.contains("shape"), "{err}");

    let mut doc = fixture_json();
    doc["tensors"].as_object_mut().unwrap().remove("block0.skip.weight");
    assert!(load_text(&doc.to_string()).unwrap_err().to_string().contains("block0.skip.weight"));

    let text = fixture_json().to_string();
    assert!(matches!(load_text(&text[..text.len() / 2]), Err(WeightError::Parse { .. })));

    assert!(matches!(
        load_weights(Path::new("/nonexistent/w.json")),
        Err(WeightError::Io { .. })
    ));
}
