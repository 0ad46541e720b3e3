//! Labeled point clouds as binary little-endian PLY plus a JSON sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bytes::{Reader, Writer};
use super::Digest;
use crate::cloud::{CloudPoint, LabeledCloud};
use crate::error::{Error, Result};

const PROPERTIES: [(&str, &str); 8] = [
    ("float", "x"),
    ("float", "y"),
    ("float", "z"),
    ("uchar", "red"),
    ("uchar", "green"),
    ("uchar", "blue"),
    ("int", "segment_id"),
    ("int", "class_id"),
];
const RECORD: usize = 12 + 3 + 8;

/// Per-segment classification details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub segment_id: i32,
    pub class_id: i32,
    pub label: Option<String>,
    pub points: usize,
    pub views: usize,
    /// Frame of the chosen view, for strategies that choose one.
    pub chosen_view: Option<u32>,
    pub entropy: Option<f64>,
    pub score: Option<f64>,
}

/// Sidecar describing the classes (and optionally segments) of a PLY cloud.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CloudLabels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    pub classes: BTreeMap<i32, String>,
    #[serde(default)]
    pub segments: Vec<SegmentReport>,
}

/// `cloud.ply` → `cloud.json`.
pub fn sidecar_path(ply: &Path) -> PathBuf {
    ply.with_extension("json")
}

pub fn encode(cloud: &LabeledCloud) -> Vec<u8> {
    let mut head = String::from("ply\nformat binary_little_endian 1.0\n");
    head += &format!("element vertex {}\n", cloud.len());
    for (ty, name) in PROPERTIES {
        head += &format!("property {ty} {name}\n");
    }
    head += "end_header\n";
    let mut w = Writer::default();
    w.bytes(head.as_bytes());
    for p in &cloud.points {
        p.position.iter().for_each(|&x| w.f32(x));
        w.bytes(&p.color);
        w.i32(p.segment_id);
        w.i32(p.class_id);
    }
    w.into_inner()
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<LabeledCloud> {
    let bad = |m: String| Error::format(path, "PLY", m);
    let end = b"end_header\n";
    let split = bytes
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| bad("no end_header".into()))?
        + end.len();
    let head = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not UTF-8".into()))?;
    let mut lines = head.lines().map(str::trim).filter(|l| !l.starts_with("comment"));
    if lines.next() != Some("ply") {
        return Err(bad("missing ply signature".into()));
    }
    if lines.next() != Some("format binary_little_endian 1.0") {
        return Err(bad("only binary_little_endian 1.0 is supported".into()));
    }
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("element vertex "))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad("expected `element vertex N`".into()))?;
    for (ty, name) in PROPERTIES {
        let want = format!("property {ty} {name}");
        match lines.next() {
            Some(l) if l == want => {}
            other => return Err(bad(format!("expected `{want}`, found {other:?}"))),
        }
    }
    if lines.next() != Some("end_header") {
        return Err(bad("unexpected extra header lines".into()));
    }
    let body = &bytes[split..];
    if body.len() != count.saturating_mul(RECORD) {
        return Err(bad(format!("{count} vertices need {} bytes, found {}", count * RECORD, body.len())));
    }
    let mut r = Reader::new(body);
    let mut points = Vec::with_capacity(count);
    let mut read = || -> Result<CloudPoint, &'static str> {
        Ok(CloudPoint {
            position: [r.f32()?, r.f32()?, r.f32()?],
            color: r.take(3)?.try_into().expect("3 bytes"),
            frame_id: 0,
            pixel: [0, 0],
            segment_id: r.i32()?,
            class_id: r.i32()?,
        })
    };
    for _ in 0..count {
        points.push(read().map_err(|e| bad(e.into()))?);
    }
    Ok(LabeledCloud {
        points,
        provenance: Default::default(),
    })
}

pub fn write(path: &Path, cloud: &LabeledCloud) -> Result<()> {
    fs::write(path, encode(cloud)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<LabeledCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Reads a cloud and its sidecar.
pub fn read_labeled(path: &Path) -> Result<(LabeledCloud, CloudLabels)> {
    let cloud = read(path)?;
    let labels = super::read_json(&sidecar_path(path))?;
    Ok((cloud, labels))
}

pub fn write_labeled(path: &Path, cloud: &LabeledCloud, labels: &CloudLabels) -> Result<()> {
    write(path, cloud)?;
    super::write_json(&sidecar_path(path), labels)
}
