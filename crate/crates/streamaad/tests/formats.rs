use std::path::Path;

use proptest::prelude::*;
use streamaad::checkpoint::{
    checkpoint_name, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint,
    AnyModel,
};
use streamaad::config::{DataSource, ExperimentConfig};
use streamaad::container::{
    decode_payload, encode_payload, read_manifest, Dataset, DatasetWriter, Manifest, Stage,
    MANIFEST_FILE,
};
use streamaad::core::data::{Direction, Scenario, TrialMeta};
use streamaad::core::model::{Model, ModelConfig, ModelKind};
use streamaad::core::synth::SynthConfig;
use streamaad::core::Tensor;
use streamaad::error::{exit, Error};

fn meta(subject: u32, trial: u32) -> TrialMeta {
    TrialMeta {
        subject,
        scenario: Scenario::AudioOnly,
        trial,
        label: if trial.is_multiple_of(2) {
            Direction::Left
        } else {
            Direction::Right
        },
    }
}

fn tensor(rows: usize, cols: usize, seed: u32) -> Tensor<f32> {
    let data = (0..rows * cols)
        .map(|i| ((i as u32).wrapping_mul(2654435761).wrapping_add(seed) as f32) * 1e-9 - 2.0)
        .collect();
    Tensor::new([rows, cols], data).unwrap()
}

fn small_config() -> ModelConfig {
    ModelConfig {
        channels: 4,
        hidden: 8,
        kernel: 3,
    }
}

#[test]
fn payload_round_trip_is_byte_exact() {
    let t = tensor(37, 5, 1);
    let bytes = encode_payload(&t);
    let back = decode_payload(&bytes, Path::new("x")).unwrap();
    assert_eq!(back, t);
    assert_eq!(encode_payload(&back), bytes);
}

#[test]
fn payload_header_errors() {
    let bytes = encode_payload(&tensor(4, 3, 2));
    let p = Path::new("p.aadt");

    let mut bad = bytes.clone();
    bad[0] = b'X';
    let e = decode_payload(&bad, p).unwrap_err();
    assert!(matches!(e, Error::BadMagic { .. }), "{e}");
    assert_eq!(e.exit_code(), exit::FORMAT);

    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(
        decode_payload(&bad, p).unwrap_err(),
        Error::UnsupportedVersion { found: 9, .. }
    ));

    assert!(matches!(
        decode_payload(&bytes[..bytes.len() - 1], p).unwrap_err(),
        Error::Truncated { .. }
    ));
    assert!(matches!(
        decode_payload(&bytes[..7], p).unwrap_err(),
        Error::Truncated { .. }
    ));
}

#[test]
fn dataset_round_trip_and_shape_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = Manifest::new(Stage::Raw, 1000, 3);
    m.synth = Some(SynthConfig::default());
    let mut w = DatasetWriter::create(dir.path(), m).unwrap();
    let trials: Vec<_> = (1..=3)
        .map(|i| (meta(1, i), tensor(20 + i as usize, 3, i)))
        .collect();
    for (m, t) in &trials {
        w.push(*m, t).unwrap();
    }
    let manifest = w.finish().unwrap();
    let manifest_bytes = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();

    let ds = Dataset::open(dir.path()).unwrap();
    assert_eq!(ds.manifest, manifest);
    assert_eq!(ds.len(), 3);
    for (i, (m, t)) in trials.iter().enumerate() {
        let raw = ds.load_raw(i).unwrap();
        assert_eq!(&raw.meta, m);
        assert_eq!(&raw.samples, t);
    }
    // Re-serializing the manifest reproduces the file.
    streamaad::container::write_manifest(dir.path(), &read_manifest(dir.path()).unwrap()).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap(),
        manifest_bytes
    );

    let mut entry_bad = manifest.clone();
    entry_bad.trials[0].rows += 1;
    streamaad::container::write_manifest(dir.path(), &entry_bad).unwrap();
    let e = Dataset::open(dir.path()).unwrap().load(0).unwrap_err();
    assert!(matches!(e, Error::Consistency { .. }), "{e}");
    assert_eq!(e.exit_code(), exit::CONSISTENCY);
}

#[test]
fn manifest_errors() {
    let dir = tempfile::tempdir().unwrap();
    let e = read_manifest(dir.path()).unwrap_err();
    assert_eq!(e.exit_code(), exit::IO);

    let mut m = serde_json::to_value(Manifest::new(Stage::Processed, 128, 32)).unwrap();
    m["schema_version"] = 7.into();
    std::fs::write(dir.path().join(MANIFEST_FILE), m.to_string()).unwrap();
    assert!(matches!(
        read_manifest(dir.path()).unwrap_err(),
        Error::UnsupportedVersion { found: 7, .. }
    ));

    std::fs::write(dir.path().join(MANIFEST_FILE), "{not json").unwrap();
    assert_eq!(
        read_manifest(dir.path()).unwrap_err().exit_code(),
        exit::FORMAT
    );
}

#[test]
fn checkpoint_round_trip_both_precisions_and_kinds() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [ModelKind::StreamAad, ModelKind::Cnn] {
        let m32 = Model::<f32>::init(kind, small_config(), 11);
        let bytes = encode_checkpoint(&m32, 7, 99);
        let back = decode_checkpoint(&bytes, Path::new("c")).unwrap();
        assert_eq!((back.epoch, back.seed), (7, 99));
        let AnyModel::F32(ref restored) = back.model else {
            panic!("precision changed")
        };
        assert_eq!(encode_checkpoint(restored, 7, 99), bytes);

        let m64 = Model::<f64>::init(kind, small_config(), 12);
        let path = dir.path().join(checkpoint_name(12, 3));
        save_checkpoint(&path, &m64, 3, 12).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.model.into_f64().unwrap(), m64);
    }
    assert_eq!(
        checkpoint_name(255, 30),
        "run-00000000000000ff_epoch-0030.ckpt"
    );
}

#[test]
fn checkpoint_corruption_errors() {
    let bytes = encode_checkpoint(
        &Model::<f32>::init(ModelKind::StreamAad, small_config(), 1),
        1,
        1,
    );
    let p = Path::new("c.ckpt");

    let mut bad = bytes.clone();
    bad[..8].copy_from_slice(b"NOTACKPT");
    assert!(matches!(
        decode_checkpoint(&bad, p).unwrap_err(),
        Error::BadMagic { .. }
    ));

    let mut bad = bytes.clone();
    bad[8] = 2;
    assert!(matches!(
        decode_checkpoint(&bad, p).unwrap_err(),
        Error::UnsupportedVersion { found: 2, .. }
    ));

    let e = decode_checkpoint(&bytes[..bytes.len() - 3], p).unwrap_err();
    assert!(matches!(e, Error::Truncated { .. }), "{e}");

    let mut bad = bytes.clone();
    bad.push(0);
    assert!(matches!(
        decode_checkpoint(&bad, p).unwrap_err(),
        Error::Malformed { .. }
    ));

    // Unknown model kind tag.
    let mut bad = bytes.clone();
    bad[12] = 77;
    let e = decode_checkpoint(&bad, p).unwrap_err();
    assert!(matches!(e, Error::Malformed { .. }), "{e}");
    assert_eq!(e.exit_code(), exit::FORMAT);
}

#[test]
fn experiment_config_rejects_unknown_fields() {
    let cfg = ExperimentConfig::new(DataSource::Synth(SynthConfig::default()));
    let mut v = serde_json::to_value(&cfg).unwrap();
    let back: ExperimentConfig = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(back, cfg);

    v["learning_rate"] = 0.1.into();
    assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(
        &path,
        r#"{"schema_version": 1, "data": {"path": "x"}, "train": {"epochs": 0}}"#,
    )
    .unwrap();
    let e = ExperimentConfig::load(&path).unwrap_err();
    assert_eq!(e.exit_code(), exit::USAGE, "{e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn payload_round_trip_any_values(rows in 1usize..40, cols in 1usize..6, bits in prop::collection::vec(any::<u32>(), 240)) {
        let data: Vec<f32> = (0..rows * cols).map(|i| f32::from_bits(bits[i % bits.len()])).collect();
        let t = Tensor::new([rows, cols], data).unwrap();
        let bytes = encode_payload(&t);
        let back = decode_payload(&bytes, Path::new("p")).unwrap();
        prop_assert_eq!(encode_payload(&back), bytes);
    }
}
