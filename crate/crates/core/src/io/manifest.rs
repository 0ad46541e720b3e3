//! Dataset manifests: intrinsics, pose file, per-frame image paths, prompts.
//!
//! ```json
//! {
//!   "intrinsics": {"fx": 600, "fy": 600, "cx": 599.5, "cy": 339.5, "width": 1200, "height": 680},
//!   "depth_scale": 6553.5,
//!   "poses": {"path": "traj.txt", "convention": "camera_to_world"},
//!   "frames": [{"id": 0, "rgb": "results/frame000000.jpg", "depth": "results/depth000000.png"}],
//!   "ground_truth": "gt.ply",
//!   "prompts": {"evaluation": "eval.ovpe", "entropy": "entropy.ovpe"}
//! }
//! ```
//!
//! Paths are relative to the manifest. The pose file holds one row-major 4×4
//! matrix (16 numbers) per line, one line per frame entry.

use std::fs;
use std::path::{Path, PathBuf};

use image::ImageReader;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Error, Result};
use crate::features::{ovpe, PromptList, PromptRole};
use crate::geometry::{CameraIntrinsics, DepthMap, Frame, Pose};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseConvention {
    #[default]
    CameraToWorld,
    WorldToCamera,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSource {
    pub path: PathBuf,
    #[serde(default)]
    pub convention: PoseConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub id: u32,
    pub rgb: PathBuf,
    pub depth: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFiles {
    pub evaluation: PathBuf,
    pub entropy: PathBuf,
}

/// On-disk manifest document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub intrinsics: CameraIntrinsics,
    /// Depth units per meter.
    pub depth_scale: f64,
    pub poses: PoseSource,
    pub frames: Vec<FrameEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    pub prompts: PromptFiles,
}

/// A validated manifest with resolved paths and parsed poses.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub path: PathBuf,
    pub intrinsics: CameraIntrinsics,
    pub depth_scale: f64,
    pub frames: Vec<FrameEntry>,
    /// Camera-to-world pose per frame entry.
    pub poses: Vec<Pose>,
    pub ground_truth: Option<PathBuf>,
    pub prompts: PromptFiles,
    /// SHA-256 of the manifest and pose file contents.
    pub content_digest: super::Digest,
}

fn must_exist(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ))
    }
}

pub fn parse_poses(text: &str, convention: PoseConvention, path: &Path) -> Result<Vec<Pose>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, "pose", format!("line {}: {e}", n + 1)))?;
        let m: [f64; 16] = vals
            .try_into()
            .map_err(|v: Vec<f64>| Error::format(path, "pose", format!("line {}: {} values, expected 16", n + 1, v.len())))?;
        let pose = Pose::from_row_major(&m).map_err(|e| Error::format(path, "pose", format!("line {}: {e}", n + 1)))?;
        out.push(match convention {
            PoseConvention::CameraToWorld => pose,
            PoseConvention::WorldToCamera => pose.inverse(),
        });
    }
    Ok(out)
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ManifestFile =
            serde_json::from_str(&text).map_err(|e| Error::format(path, "manifest", e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let bad = |m: String| Error::format(path, "manifest", m);
        file.intrinsics.validate().map_err(|e| bad(e.to_string()))?;
        if !(file.depth_scale > 0.0 && file.depth_scale.is_finite()) {
            return Err(bad("depth_scale must be positive".into()));
        }
        if file.frames.is_empty() {
            return Err(bad("no frames".into()));
        }
        if let Some(w) = file.frames.windows(2).find(|w| w[1].id <= w[0].id) {
            return Err(bad(format!("frame ids must increase ({} then {})", w[0].id, w[1].id)));
        }
        let pose_path = base.join(&file.poses.path);
        let pose_text = fs::read_to_string(&pose_path).map_err(|e| Error::io(&pose_path, e))?;
        let poses = parse_poses(&pose_text, file.poses.convention, &pose_path)?;
        if poses.len() < file.frames.len() {
            return Err(bad(format!("{} poses for {} frames", poses.len(), file.frames.len())));
        }
        let frames: Vec<FrameEntry> = file
            .frames
            .iter()
            .map(|f| FrameEntry {
                id: f.id,
                rgb: base.join(&f.rgb),
                depth: base.join(&f.depth),
            })
            .collect();
        for f in &frames {
            must_exist(&f.rgb)?;
            must_exist(&f.depth)?;
        }
        let prompts = PromptFiles {
            evaluation: base.join(&file.prompts.evaluation),
            entropy: base.join(&file.prompts.entropy),
        };
        must_exist(&prompts.evaluation)?;
        must_exist(&prompts.entropy)?;
        let ground_truth = file.ground_truth.as_ref().map(|g| base.join(g));
        if let Some(g) = &ground_truth {
            must_exist(g)?;
        }
        let mut blob = text.into_bytes();
        blob.extend_from_slice(pose_text.as_bytes());
        Ok(Manifest {
            path: path.to_path_buf(),
            intrinsics: file.intrinsics,
            depth_scale: file.depth_scale,
            poses: poses[..frames.len()].to_vec(),
            frames,
            ground_truth,
            prompts,
            content_digest: super::Digest::of_bytes(&blob),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_index(&self, id: u32) -> Option<usize> {
        self.frames.binary_search_by_key(&id, |f| f.id).ok()
    }

    /// Loads the frame at position `i` of the frame list.
    pub fn load_frame(&self, i: usize) -> Result<Frame> {
        let e = &self.frames[i];
        let rgb = ImageReader::open(&e.rgb)
            .map_err(|err| Error::io(&e.rgb, err))?
            .with_guessed_format()
            .map_err(|err| Error::io(&e.rgb, err))?
            .decode()
            .map_err(|source| Error::Image {
                path: e.rgb.clone(),
                source,
            })?
            .into_rgb8();
        let depth_img = ImageReader::open(&e.depth)
            .map_err(|err| Error::io(&e.depth, err))?
            .with_guessed_format()
            .map_err(|err| Error::io(&e.depth, err))?
            .decode()
            .map_err(|source| Error::Image {
                path: e.depth.clone(),
                source,
            })?;
        let depth_img = match depth_img {
            image::DynamicImage::ImageLuma16(d) => d,
            _ => return Err(Error::format(&e.depth, "depth", "expected a 16-bit grayscale image")),
        };
        let depth = DepthMap::from_units(depth_img.width(), depth_img.height(), depth_img.as_raw(), self.depth_scale)?;
        Frame::new(e.id, rgb, depth, self.poses[i], self.intrinsics)
            .map_err(|err| Error::format(&e.rgb, "frame", err.to_string()))
    }

    /// Loads the frames at the given list positions in parallel.
    pub fn load_frames(&self, indices: &[usize]) -> Result<Vec<Frame>> {
        par::map(indices, |&i| self.load_frame(i)).into_iter().collect()
    }

    pub fn load_prompts(&self) -> Result<(PromptList, PromptList)> {
        Ok((
            ovpe::read(&self.prompts.evaluation, PromptRole::Evaluation)?,
            ovpe::read(&self.prompts.entropy, PromptRole::Entropy)?,
        ))
    }
}

/// Writes a color image and a 16-bit depth image in the layout `Manifest::load_frame` reads.
pub fn write_frame_images(frame: &Frame, rgb: &Path, depth: &Path, depth_scale: f64) -> Result<()> {
    ensure_arg!(depth_scale > 0.0, "depth scale must be positive");
    frame.rgb.save(rgb).map_err(|source| Error::Image {
        path: rgb.to_path_buf(),
        source,
    })?;
    let raw: Vec<u16> = frame
        .depth
        .as_slice()
        .iter()
        .map(|&d| (d as f64 * depth_scale).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(frame.depth.width(), frame.depth.height(), raw)
        .expect("buffer matches dimensions");
    img.save(depth).map_err(|source| Error::Image {
        path: depth.to_path_buf(),
        source,
    })
}

/// One line of 16 row-major values per pose.
pub fn format_poses(poses: &[Pose]) -> String {
    let mut s = String::new();
    for p in poses {
        let m = p.to_row_major();
        let row: Vec<String> = m.iter().map(|v| format!("{v:.17e}")).collect();
        s += &row.join(" ");
        s.push('\n');
    }
    s
}
