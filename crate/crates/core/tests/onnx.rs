#![cfg(feature = "onnx")]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ovseg::features::{Embedder, OnnxEmbedder};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/onnx")
}

#[test]
fn image_embeddings_match_the_exporting_framework() {
    let e = OnnxEmbedder::load(&fixture()).unwrap();
    assert_eq!(e.dim(), 16);
    let expected: BTreeMap<String, Vec<f32>> =
        serde_json::from_slice(&fs::read(fixture().join("expected.json")).unwrap()).unwrap();
    assert_eq!(expected.len(), 3);
    for (name, want) in &expected {
        let img = image::open(fixture().join(name)).unwrap().to_rgb8();
        let got = e.embed_image(&img).unwrap();
        let cos = got.dot(want);
        assert!(cos >= 0.9999, "{name}: cosine {cos}");
    }
}

#[test]
fn crops_of_any_shape_are_resized() {
    let e = OnnxEmbedder::load(&fixture()).unwrap();
    let img = image::open(fixture().join("probe_0.png")).unwrap().to_rgb8();
    for (w, h) in [(7, 50), (90, 33), (1, 1)] {
        let crop = image::imageops::resize(&img, w, h, image::imageops::FilterType::Triangle);
        let f = e.embed_image(&crop).unwrap();
        let norm: f64 = f.as_slice().iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
    }
    assert!(e.embed_image(&image::RgbImage::new(0, 4)).is_err());
}

#[test]
fn text_comes_from_the_label_table() {
    let e = OnnxEmbedder::load(&fixture()).unwrap();
    let chair = e.embed_text("chair").unwrap();
    assert_eq!(chair.dim(), 16);
    assert!((chair.dot(chair.as_slice()) - 1.0).abs() < 1e-5);
    assert!(e.embed_text("Chair").is_ok());
    let err = e.embed_text("sofa").unwrap_err().to_string();
    assert!(err.contains("sofa"), "{err}");
}

#[test]
fn mismatched_resolution_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(fixture().join("image_encoder.onnx"), dir.path().join("image_encoder.onnx")).unwrap();
    fs::write(
        dir.path().join("preprocess.json"),
        r#"{"resolution": 48, "mean": [0.5, 0.5, 0.5], "std": [0.5, 0.5, 0.5]}"#,
    )
    .unwrap();
    assert!(OnnxEmbedder::load(dir.path()).is_err());

    fs::write(
        dir.path().join("preprocess.json"),
        r#"{"resolution": 32, "mean": [0.5, 0.5, 0.5], "std": [0.5, 0.0, 0.5]}"#,
    )
    .unwrap();
    assert!(OnnxEmbedder::load(dir.path()).is_err());
}

#[test]
fn missing_files_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let err = OnnxEmbedder::load(dir.path()).unwrap_err().to_string();
    assert!(err.contains("preprocess.json"), "{err}");
    fs::copy(fixture().join("preprocess.json"), dir.path().join("preprocess.json")).unwrap();
    let err = OnnxEmbedder::load(dir.path()).unwrap_err().to_string();
    assert!(err.contains("image_encoder.onnx"), "{err}");
}
