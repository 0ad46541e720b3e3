//! World-frame point cloud accumulation and voxel downsampling.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{ensure_arg, Error, Result};
use crate::geometry::{backproject_unchecked, Frame};
use crate::par;

pub const UNASSIGNED: i32 = -1;
pub const DEFAULT_PIXEL_STEP: u32 = 4;
pub const DEFAULT_VOXEL: f64 = 0.01;
pub const DEFAULT_STRIDE: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: [f32; 3],
    pub color: [u8; 3],
    pub frame_id: u32,
    /// Source pixel `(u, v)` in `frame_id`.
    pub pixel: [u32; 2],
    pub segment_id: i32,
    pub class_id: i32,
}

impl CloudPoint {
    pub fn position_f64(&self) -> Vector3<f64> {
        Vector3::new(self.position[0] as f64, self.position[1] as f64, self.position[2] as f64)
    }

    pub fn xyz(&self) -> [f64; 3] {
        [self.position[0] as f64, self.position[1] as f64, self.position[2] as f64]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Provenance {
    pub stride: u32,
    pub frame_count: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledCloud {
    pub points: Vec<CloudPoint>,
    pub provenance: Provenance,
}

impl LabeledCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(CloudPoint::xyz).collect()
    }
}

/// Indices of the frames kept when sampling every `stride`-th frame.
pub fn sample_indices(frame_count: usize, stride: u32) -> Vec<usize> {
    (0..frame_count).step_by(stride.max(1) as usize).collect()
}

/// Back-projects every `stride`-th frame into one world-frame cloud.
pub fn accumulate(frames: &[Frame], stride: u32, pixel_step: u32) -> Result<LabeledCloud> {
    ensure_arg!(stride >= 1, "stride must be at least 1");
    ensure_arg!(!frames.is_empty(), "no frames to accumulate");
    let picked: Vec<&Frame> = sample_indices(frames.len(), stride).into_iter().map(|i| &frames[i]).collect();
    let mut cloud = backproject_frames(&picked, pixel_step)?;
    cloud.provenance.stride = stride;
    Ok(cloud)
}

/// Back-projects already-sampled frames; provenance stride is left at 1.
pub fn backproject_frames(frames: &[&Frame], pixel_step: u32) -> Result<LabeledCloud> {
    ensure_arg!(pixel_step >= 1, "pixel_step must be at least 1");
    ensure_arg!(!frames.is_empty(), "no frames to accumulate");
    let per_frame = par::map(frames, |f| frame_points(f, pixel_step));
    let points: Vec<CloudPoint> = per_frame.into_iter().flatten().collect();
    if points.is_empty() {
        return Err(Error::EmptyCloud("every sampled depth value is invalid".into()));
    }
    Ok(LabeledCloud {
        points,
        provenance: Provenance {
            stride: 1,
            frame_count: frames.len() as u32,
        },
    })
}

fn frame_points(frame: &Frame, step: u32) -> Vec<CloudPoint> {
    let k = &frame.intrinsics;
    let mut out = Vec::new();
    for v in (0..k.height).step_by(step as usize) {
        for u in (0..k.width).step_by(step as usize) {
            let Some(p) = backproject_unchecked(&frame.pose, k, u, v, frame.depth.get(u, v)) else {
                continue;
            };
            out.push(CloudPoint {
                position: [p.x as f32, p.y as f32, p.z as f32],
                color: frame.rgb.get_pixel(u, v).0,
                frame_id: frame.id,
                pixel: [u, v],
                segment_id: UNASSIGNED,
                class_id: UNASSIGNED,
            });
        }
    }
    out
}

fn cell_of(p: &[f32; 3], voxel: f64) -> [i64; 3] {
    [
        (p[0] as f64 / voxel).floor() as i64,
        (p[1] as f64 / voxel).floor() as i64,
        (p[2] as f64 / voxel).floor() as i64,
    ]
}

/// Keeps one representative point per voxel cell.
///
/// The representative is the member closest to the centroid of the cell's
/// points (lowest input index on ties), so it keeps its own source frame.
/// Output is ordered by each cell's first input point.
pub fn voxel_downsample(cloud: &LabeledCloud, voxel: f64) -> Result<LabeledCloud> {
    ensure_arg!(voxel > 0.0 && voxel.is_finite(), "voxel size must be positive, got {voxel}");
    let keys = par::map(&cloud.points, |p| cell_of(&p.position, voxel));

    let mut slot: HashMap<[i64; 3], usize> = HashMap::with_capacity(cloud.len() / 4 + 1);
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, key) in keys.iter().enumerate() {
        let s = *slot.entry(*key).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[s].push(i);
    }

    let reps = par::map(&members, |idx| {
        if idx.len() == 1 {
            return idx[0];
        }
        let mut c = [0.0f64; 3];
        for &i in idx {
            let p = cloud.points[i].xyz();
            for a in 0..3 {
                c[a] += p[a];
            }
        }
        let n = idx.len() as f64;
        let c = [c[0] / n, c[1] / n, c[2] / n];
        let mut best = idx[0];
        let mut best_d = crate::kdtree::dist2(&cloud.points[best].xyz(), &c);
        for &i in &idx[1..] {
            let d = crate::kdtree::dist2(&cloud.points[i].xyz(), &c);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    });

    Ok(LabeledCloud {
        points: reps.into_iter().map(|i| cloud.points[i]).collect(),
        provenance: cloud.provenance,
    })
}
