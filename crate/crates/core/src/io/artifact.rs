//! Intermediate pipeline artifacts.
//!
//! Cloud files (`OVPC`) and view-feature files (`OVFT`) are flat little-endian
//! records behind a header that carries the digest of the settings that
//! produced them, so downstream stages can reject stale inputs.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use super::bytes::{Reader, Writer};
use crate::cloud::{CloudPoint, LabeledCloud, Provenance};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::views::BoundingBox;

pub const CLOUD_MAGIC: &[u8; 4] = b"OVPC";
pub const FEATURE_MAGIC: &[u8; 4] = b"OVFT";
pub const VERSION: u16 = 1;

/// SHA-256 of upstream settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    /// Digest of `parent` followed by the JSON encoding of `value`.
    pub fn chain<T: Serialize>(parent: Option<&Digest>, value: &T) -> Result<Digest> {
        let mut h = Sha256::new();
        if let Some(p) = parent {
            h.update(p.0);
        }
        h.update(serde_json::to_vec(value)?);
        Ok(Digest(h.finalize().into()))
    }

    pub fn of_bytes(bytes: &[u8]) -> Digest {
        Digest(Sha256::digest(bytes).into())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let a: [u8; 32] = v
            .try_into()
            .map_err(|_| serde::de::Error::custom("digest must be 32 bytes"))?;
        Ok(Digest(a))
    }
}

fn header(w: &mut Writer, magic: &[u8; 4], digest: &Digest) {
    w.bytes(magic);
    w.u16(VERSION);
    w.bytes(&digest.0);
}

fn read_header(r: &mut Reader, magic: &[u8; 4]) -> Result<Digest, String> {
    let m = r.take(4)?;
    if m != magic {
        return Err(format!("bad magic {m:?}"));
    }
    let v = r.u16()?;
    if v != VERSION {
        return Err(format!("unsupported version {v}"));
    }
    Ok(Digest(r.take(32)?.try_into().expect("32 bytes")))
}

pub fn encode_cloud(cloud: &LabeledCloud, digest: &Digest) -> Vec<u8> {
    let mut w = Writer::default();
    header(&mut w, CLOUD_MAGIC, digest);
    w.u32(cloud.provenance.stride);
    w.u32(cloud.provenance.frame_count);
    w.u64(cloud.len() as u64);
    for p in &cloud.points {
        p.position.iter().for_each(|&x| w.f32(x));
        w.bytes(&p.color);
        w.u32(p.frame_id);
        w.u32(p.pixel[0]);
        w.u32(p.pixel[1]);
        w.i32(p.segment_id);
        w.i32(p.class_id);
    }
    w.into_inner()
}

pub fn decode_cloud(bytes: &[u8], path: &Path) -> Result<(LabeledCloud, Digest)> {
    let parse = || -> Result<(LabeledCloud, Digest), String> {
        let mut r = Reader::new(bytes);
        let digest = read_header(&mut r, CLOUD_MAGIC)?;
        let provenance = Provenance {
            stride: r.u32()?,
            frame_count: r.u32()?,
        };
        let n = r.u64()? as usize;
        const RECORD: usize = 12 + 3 + 12 + 8;
        if r.remaining() != n.saturating_mul(RECORD) {
            return Err(format!("{n} points need {} bytes, found {}", n.saturating_mul(RECORD), r.remaining()));
        }
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let position = [r.f32()?, r.f32()?, r.f32()?];
            if position.iter().any(|x| !x.is_finite()) {
                return Err("non-finite position".into());
            }
            let color = r.take(3)?.try_into().expect("3 bytes");
            let frame_id = r.u32()?;
            let pixel = [r.u32()?, r.u32()?];
            let segment_id = r.i32()?;
            let class_id = r.i32()?;
            if segment_id < -1 || class_id < -1 {
                return Err("label below -1".into());
            }
            points.push(CloudPoint {
                position,
                color,
                frame_id,
                pixel,
                segment_id,
                class_id,
            });
        }
        Ok((LabeledCloud { points, provenance }, digest))
    };
    parse().map_err(|e| Error::format(path, "cloud", e))
}

pub fn write_cloud(path: &Path, cloud: &LabeledCloud, digest: &Digest) -> Result<()> {
    fs::write(path, encode_cloud(cloud, digest)).map_err(|e| Error::io(path, e))
}

pub fn read_cloud(path: &Path) -> Result<(LabeledCloud, Digest)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cloud(&bytes, path)
}

/// Embedding of one crop of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewFeature {
    pub segment_id: i32,
    pub frame_id: u32,
    pub scale: f32,
    pub visible_points: u32,
    /// Clipped crop box.
    pub bbox: BoundingBox,
    pub feature: FeatureVector,
}

pub fn encode_features(dim: usize, records: &[ViewFeature], digest: &Digest) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    header(&mut w, FEATURE_MAGIC, digest);
    w.u32(dim as u32);
    w.u64(records.len() as u64);
    for r in records {
        if r.feature.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: r.feature.dim(),
            });
        }
        w.i32(r.segment_id);
        w.u32(r.frame_id);
        w.f32(r.scale);
        w.u32(r.visible_points);
        for x in [r.bbox.u_min, r.bbox.v_min, r.bbox.u_max, r.bbox.v_max] {
            w.i32(x as i32);
        }
        r.feature.as_slice().iter().for_each(|&x| w.f32(x));
    }
    Ok(w.into_inner())
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<(usize, Vec<ViewFeature>, Digest)> {
    let parse = || -> Result<(usize, Vec<ViewFeature>, Digest), String> {
        let mut r = Reader::new(bytes);
        let digest = read_header(&mut r, FEATURE_MAGIC)?;
        let dim = r.u32()? as usize;
        let n = r.u64()? as usize;
        let record = 32usize.saturating_add(dim.saturating_mul(4));
        if r.remaining() != n.saturating_mul(record) {
            return Err(format!("{n} records need {} bytes, found {}", n.saturating_mul(record), r.remaining()));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let segment_id = r.i32()?;
            let frame_id = r.u32()?;
            let scale = r.f32()?;
            let visible_points = r.u32()?;
            let b = [r.i32()?, r.i32()?, r.i32()?, r.i32()?];
            let bbox = BoundingBox::new(b[0] as i64, b[1] as i64, b[2] as i64, b[3] as i64).map_err(|e| e.to_string())?;
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                v.push(r.f32()?);
            }
            let feature = FeatureVector::from_unit(v).map_err(|e| e.to_string())?;
            out.push(ViewFeature {
                segment_id,
                frame_id,
                scale,
                visible_points,
                bbox,
                feature,
            });
        }
        Ok((dim, out, digest))
    };
    parse().map_err(|e| Error::format(path, "feature", e))
}

pub fn write_features(path: &Path, dim: usize, records: &[ViewFeature], digest: &Digest) -> Result<()> {
    fs::write(path, encode_features(dim, records, digest)?).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<(usize, Vec<ViewFeature>, Digest)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> LabeledCloud {
        let p = |i: u32| CloudPoint {
            position: [i as f32 * 0.5, -1.25, 3.0],
            color: [i as u8, 2, 3],
            frame_id: i * 50,
            pixel: [i, i + 1],
            segment_id: i as i32 - 1,
            class_id: 7,
        };
        LabeledCloud {
            points: (0..5).map(p).collect(),
            provenance: Provenance {
                stride: 50,
                frame_count: 3,
            },
        }
    }

    #[test]
    fn cloud_roundtrip() {
        let d = Digest::of_bytes(b"cfg");
        let bytes = encode_cloud(&cloud(), &d);
        assert_eq!(&bytes[..4], b"OVPC");
        let (back, d2) = decode_cloud(&bytes, Path::new("m")).unwrap();
        assert_eq!(back, cloud());
        assert_eq!(d, d2);
        assert!(decode_cloud(&bytes[..bytes.len() - 2], Path::new("m")).is_err());
    }

    #[test]
    fn feature_roundtrip() {
        let d = Digest::chain(None, &("a", 1)).unwrap();
        let recs = vec![ViewFeature {
            segment_id: 3,
            frame_id: 100,
            scale: 1.5,
            visible_points: 42,
            bbox: BoundingBox::new(1, 2, 30, 40).unwrap(),
            feature: FeatureVector::normalized(&[3.0, 4.0]).unwrap(),
        }];
        let bytes = encode_features(2, &recs, &d).unwrap();
        let (dim, back, d2) = decode_features(&bytes, Path::new("m")).unwrap();
        assert_eq!((dim, back, d2), (2, recs.clone(), d));
        assert!(encode_features(3, &recs, &d).is_err());
    }

    #[test]
    fn digests_chain() {
        let a = Digest::chain(None, &1).unwrap();
        let b = Digest::chain(Some(&a), &2).unwrap();
        assert_ne!(b, Digest::chain(None, &2).unwrap());
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(serde_json::from_str::<Digest>(&s).unwrap(), b);
        assert_eq!(s.len(), 66);
    }
}
