//! File formats: binary artifacts, labeled PLY, manifests and reports.

pub mod artifact;
pub(crate) mod bytes;
pub mod manifest;
pub mod ply;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use artifact::{Digest, ViewFeature};
pub use manifest::{Manifest, PoseConvention};
pub use ply::{CloudLabels, SegmentReport};

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::format(path, "JSON", e.to_string()))
}
