//! Per-segment view association, bounding-box scaling and cropping.

use image::{imageops, RgbImage};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Result};
use crate::geometry::{visible_observation, Frame};
use crate::par;

pub const DEFAULT_SCALE: f64 = 1.5;
pub const STUDY_SCALES: [f64; 5] = [1.0, 1.2, 1.5, 1.8, 2.0];
pub const DEFAULT_MIN_VISIBLE: usize = 20;

/// Pixel box, `[u_min, u_max) × [v_min, v_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub u_min: i64,
    pub v_min: i64,
    pub u_max: i64,
    pub v_max: i64,
}

impl BoundingBox {
    pub fn new(u_min: i64, v_min: i64, u_max: i64, v_max: i64) -> Result<Self> {
        ensure_arg!(u_min < u_max && v_min < v_max, "empty box ({u_min},{v_min})–({u_max},{v_max})");
        Ok(BoundingBox {
            u_min,
            v_min,
            u_max,
            v_max,
        })
    }

    pub fn width(&self) -> i64 {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> i64 {
        self.v_max - self.v_min
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        self.u_min <= other.u_min && self.v_min <= other.v_min && self.u_max >= other.u_max && self.v_max >= other.v_max
    }

    pub fn contains(&self, u: i64, v: i64) -> bool {
        u >= self.u_min && u < self.u_max && v >= self.v_min && v < self.v_max
    }
}

/// A frame in which a segment is visible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub frame_id: u32,
    /// Tight box around the visible projections, before scaling.
    pub bbox: BoundingBox,
    pub visible_points: usize,
}

/// Counts visible points of a segment in every frame and boxes them.
///
/// Frames where fewer than `min_visible` points are unobstructed are left out.
pub fn associate(points: &[Vector3<f64>], frames: &[&Frame], tol: f64, min_visible: usize) -> Result<Vec<Association>> {
    ensure_arg!(!points.is_empty(), "segment has no points");
    ensure_arg!(tol > 0.0, "occlusion tolerance must be positive");
    let found = par::map(frames, |frame| {
        let mut count = 0usize;
        let (mut u0, mut v0, mut u1, mut v1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
        for p in points {
            let Some(obs) = visible_observation(p, frame, tol) else {
                continue;
            };
            let (u, v) = obs.pixel(&frame.intrinsics).expect("visible points are on the image");
            let (u, v) = (u as i64, v as i64);
            count += 1;
            u0 = u0.min(u);
            v0 = v0.min(v);
            u1 = u1.max(u + 1);
            v1 = v1.max(v + 1);
        }
        (count >= min_visible.max(1)).then_some(Association {
            frame_id: frame.id,
            bbox: BoundingBox {
                u_min: u0,
                v_min: v0,
                u_max: u1,
                v_max: v1,
            },
            visible_points: count,
        })
    });
    Ok(found.into_iter().flatten().collect())
}

/// Keeps the `n` associations with the most visible points (earlier frames win ties),
/// preserving their original order.
pub fn top_n(assoc: Vec<Association>, n: Option<usize>) -> Vec<Association> {
    let Some(n) = n else { return assoc };
    if assoc.len() <= n {
        return assoc;
    }
    let mut idx: Vec<usize> = (0..assoc.len()).collect();
    idx.sort_by(|&a, &b| assoc[b].visible_points.cmp(&assoc[a].visible_points).then(a.cmp(&b)));
    let mut keep = idx[..n].to_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| assoc[i].clone()).collect()
}

/// Scales about the center with outward rounding; no clipping.
pub fn scale_unclipped(bbox: &BoundingBox, factor: f64) -> BoundingBox {
    let cu = (bbox.u_min + bbox.u_max) as f64 / 2.0;
    let cv = (bbox.v_min + bbox.v_max) as f64 / 2.0;
    let hw = bbox.width() as f64 * factor / 2.0;
    let hh = bbox.height() as f64 * factor / 2.0;
    BoundingBox {
        u_min: (cu - hw).floor() as i64,
        v_min: (cv - hh).floor() as i64,
        u_max: (cu + hw).ceil() as i64,
        v_max: (cv + hh).ceil() as i64,
    }
}

/// Scales `bbox` by `factor` about its center and clips it to the image.
/// Sides shorter than 2 px are widened to 2 px.
pub fn scale_bbox(bbox: &BoundingBox, factor: f64, width: u32, height: u32) -> Result<BoundingBox> {
    ensure_arg!(factor >= 1.0 && factor.is_finite(), "scale factor must be ≥ 1, got {factor}");
    ensure_arg!(width >= 2 && height >= 2, "image must be at least 2×2");
    let s = scale_unclipped(bbox, factor);
    let (u_min, u_max) = clip_span(s.u_min, s.u_max, width as i64);
    let (v_min, v_max) = clip_span(s.v_min, s.v_max, height as i64);
    Ok(BoundingBox {
        u_min,
        v_min,
        u_max,
        v_max,
    })
}

fn clip_span(lo: i64, hi: i64, size: i64) -> (i64, i64) {
    let lo = lo.clamp(0, size);
    let hi = hi.clamp(0, size);
    if hi - lo >= 2 {
        return (lo, hi);
    }
    let lo = lo.min(size - 2);
    (lo, lo + 2)
}

/// Copies the pixels inside a clipped box.
pub fn crop(frame: &Frame, bbox: &BoundingBox) -> Result<RgbImage> {
    crop_image(&frame.rgb, bbox)
}

pub fn crop_image(img: &RgbImage, bbox: &BoundingBox) -> Result<RgbImage> {
    ensure_arg!(
        bbox.u_min >= 0
            && bbox.v_min >= 0
            && bbox.u_max <= img.width() as i64
            && bbox.v_max <= img.height() as i64
            && bbox.width() > 0
            && bbox.height() > 0,
        "box {bbox:?} is not inside the {}x{} image",
        img.width(),
        img.height()
    );
    Ok(imageops::crop_imm(
        img,
        bbox.u_min as u32,
        bbox.v_min as u32,
        bbox.width() as u32,
        bbox.height() as u32,
    )
    .to_image())
}
