use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use ovseg::config::RunConfig;
use ovseg::fusion::StrategyId;
use ovseg::io::{ply, Manifest};
use ovseg::pipeline::{run_pipeline, Session};
use ovseg::synth::{write_scene, Scene, SynthOptions};
use ovseg::Error;
use tempfile::TempDir;

struct Fixture {
    _dir: TempDir,
    manifest: PathBuf,
    config: PathBuf,
}

fn scene() -> &'static Fixture {
    static SCENE: OnceLock<Fixture> = OnceLock::new();
    SCENE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = write_scene(&Scene::three_objects(), &SynthOptions::default(), dir.path()).unwrap();
        Fixture {
            _dir: dir,
            manifest: out.manifest,
            config: out.config,
        }
    })
}

fn load() -> (Manifest, RunConfig) {
    let f = scene();
    (Manifest::load(&f.manifest).unwrap(), RunConfig::load(&f.config).unwrap())
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const OUTPUTS: [&str; 8] = [
    "cloud.ovpc",
    "segments.ovpc",
    "associations.json",
    "features.ovft",
    "labeled.ply",
    "labeled.json",
    "metrics.json",
    "config.toml",
];

#[test]
fn synthetic_scene_is_labeled_perfectly() {
    let (m, c) = load();
    let out = tempfile::tempdir().unwrap();
    let report = run_pipeline(&m, &c, out.path()).unwrap();
    let metrics = report.metrics.expect("ground truth present");
    assert_eq!(metrics.miou, 1.0);
    assert_eq!(metrics.fmiou, 1.0);
    assert_eq!(metrics.macc, 1.0);

    let (cloud, labels) = ply::read_labeled(&out.path().join("labeled.ply")).unwrap();
    let planted: Vec<String> = Scene::three_objects().objects.into_iter().map(|o| o.label).collect();
    for s in &labels.segments {
        let label = s.label.as_deref().expect("every segment is labeled");
        // The segment's points carry the color of exactly one object, whose concept it got.
        let colors: std::collections::BTreeSet<[u8; 3]> = cloud
            .points
            .iter()
            .filter(|p| p.segment_id == s.segment_id)
            .map(|p| p.color)
            .collect();
        assert_eq!(colors.len(), 1);
        let obj = Scene::three_objects().objects.into_iter().find(|o| colors.contains(&o.color)).unwrap();
        assert_eq!(label, obj.label);
        assert!(planted.contains(&label.to_string()));
    }
    let timing = fs::read_to_string(out.path().join("timing.txt")).unwrap();
    assert!(timing.contains("fps"));
}

#[test]
fn runs_are_byte_identical() {
    let (m, c) = load();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(&m, &c, a.path()).unwrap();
    let mut c1 = c.clone();
    c1.workers = 1;
    run_pipeline(&m, &c1, b.path()).unwrap();
    for name in OUTPUTS.iter().filter(|n| **n != "config.toml") {
        assert!(read(a.path(), name) == read(b.path(), name), "{name} differs");
    }
}

#[test]
fn staged_execution_matches_full_run() {
    let (m, c) = load();
    let full = tempfile::tempdir().unwrap();
    let staged = tempfile::tempdir().unwrap();
    run_pipeline(&m, &c, full.path()).unwrap();
    let s = Session::new(&m, &c, staged.path()).unwrap();
    s.build().unwrap();
    s.segment().unwrap();
    s.associate().unwrap();
    s.embed().unwrap();
    s.classify().unwrap();
    s.eval().unwrap().unwrap();
    for name in OUTPUTS.iter().filter(|n| **n != "config.toml") {
        assert!(read(full.path(), name) == read(staged.path(), name), "{name} differs");
    }
}

#[test]
fn every_strategy_reuses_cached_features() {
    let (m, c) = load();
    let out = tempfile::tempdir().unwrap();
    run_pipeline(&m, &c, out.path()).unwrap();
    let features = read(out.path(), "features.ovft");
    for strategy in StrategyId::ALL {
        let mut cs = c.clone();
        cs.strategy = strategy;
        let s = Session::new(&m, &cs, out.path()).unwrap();
        s.classify().unwrap();
        let report = s.eval().unwrap().unwrap();
        assert_eq!(report.strategy.as_deref(), Some(strategy.name()));
        assert!(report.miou > 0.99, "{strategy}: {}", report.miou);
        // Eval is deterministic on cached artifacts.
        let first = read(out.path(), "metrics.json");
        s.eval().unwrap();
        assert_eq!(first, read(out.path(), "metrics.json"));
    }
    assert_eq!(features, read(out.path(), "features.ovft"));
}

#[test]
fn stale_and_missing_artifacts_are_refused() {
    let (m, c) = load();
    let out = tempfile::tempdir().unwrap();
    let s = Session::new(&m, &c, out.path()).unwrap();
    assert!(matches!(s.classify(), Err(Error::MissingArtifact { stage: "embed", .. })));
    assert!(matches!(s.segment(), Err(Error::MissingArtifact { stage: "build", .. })));
    s.build().unwrap();
    s.segment().unwrap();

    let mut other = c.clone();
    other.stride += 1;
    let s2 = Session::new(&m, &other, out.path()).unwrap();
    assert!(matches!(s2.segment(), Err(Error::StaleArtifact { stage: "build", .. })));

    let mut other = c.clone();
    other.smoothness *= 2.0;
    let s3 = Session::new(&m, &other, out.path()).unwrap();
    assert!(matches!(s3.associate(), Err(Error::StaleArtifact { stage: "segment", .. })));
}

#[test]
fn missing_ground_truth_skips_metrics() {
    let f = scene();
    let dir = tempfile::tempdir().unwrap();
    let src = f.manifest.parent().unwrap();
    let mut doc: serde_json::Value = serde_json::from_slice(&fs::read(&f.manifest).unwrap()).unwrap();
    doc.as_object_mut().unwrap().remove("ground_truth");
    // Point the copy at the original frames and prompts.
    let abs = |v: &serde_json::Value| serde_json::Value::String(src.join(v.as_str().unwrap()).display().to_string());
    doc["poses"]["path"] = abs(&doc["poses"]["path"]);
    doc["prompts"]["evaluation"] = abs(&doc["prompts"]["evaluation"]);
    doc["prompts"]["entropy"] = abs(&doc["prompts"]["entropy"]);
    for fr in doc["frames"].as_array_mut().unwrap() {
        fr["rgb"] = abs(&fr["rgb"]);
        fr["depth"] = abs(&fr["depth"]);
    }
    let path = dir.path().join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&doc).unwrap()).unwrap();
    let m = Manifest::load(&path).unwrap();
    let c = RunConfig::load(&f.config).unwrap();
    let report = run_pipeline(&m, &c, &dir.path().join("out")).unwrap();
    assert!(report.metrics.is_none());
    assert!(report.render().contains("metrics skipped"));

    let mut ub = c.clone();
    ub.strategy = StrategyId::UpperBound;
    let err = run_pipeline(&m, &ub, &dir.path().join("out")).unwrap_err();
    assert!(err.to_string().contains("classify"), "{err}");
}

#[test]
fn missing_depth_file_is_named() {
    let f = scene();
    let dir = tempfile::tempdir().unwrap();
    let src = f.manifest.parent().unwrap();
    for entry in ["manifest.json", "traj.txt", "eval.ovpe", "entropy.ovpe", "gt.ply", "gt.json"] {
        fs::copy(src.join(entry), dir.path().join(entry)).unwrap();
    }
    fs::create_dir(dir.path().join("frames")).unwrap();
    for e in fs::read_dir(src.join("frames")).unwrap() {
        let e = e.unwrap();
        if e.file_name() != "depth_0003.png" {
            fs::copy(e.path(), dir.path().join("frames").join(e.file_name())).unwrap();
        }
    }
    let err = Manifest::load(&dir.path().join("manifest.json")).unwrap_err();
    assert!(err.to_string().contains("depth_0003.png"), "{err}");
}
