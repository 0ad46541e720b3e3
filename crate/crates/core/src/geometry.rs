//! Pinhole camera model, rigid poses and depth-based visibility.
//!
//! Cameras look along +z with x to the right and y down. Poses map camera
//! coordinates to world coordinates.

use image::RgbImage;
use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Error, Result};

/// Default tolerance (meters) between a projected depth and the depth map.
pub const DEFAULT_OCCLUSION_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_arg!(
            self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite(),
            "focal lengths must be positive, got fx={} fy={}",
            self.fx,
            self.fy
        );
        ensure_arg!(
            self.cx >= 0.0 && self.cx < self.width as f64,
            "cx={} outside [0, {})",
            self.cx,
            self.width
        );
        ensure_arg!(
            self.cy >= 0.0 && self.cy < self.height as f64,
            "cy={} outside [0, {})",
            self.cy,
            self.height
        );
        Ok(())
    }

    /// Whether `(u, v)` falls on a pixel; pixel `i` covers `[i − 0.5, i + 0.5)`.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    const ORTHO_TOL: f64 = 1e-6;

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        ensure_arg!(err <= Self::ORTHO_TOL, "rotation is not orthonormal (max |RᵀR − I| = {err:e})");
        let det = rotation.determinant();
        ensure_arg!((det - 1.0).abs() <= Self::ORTHO_TOL, "rotation determinant is {det}, expected +1");
        ensure_arg!(translation.iter().all(|t| t.is_finite()), "translation is not finite");
        Ok(Pose { rotation, translation })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from a row-major homogeneous 4×4 matrix.
    pub fn from_row_major(m: &[f64; 16]) -> Result<Self> {
        let mat = Matrix4::from_row_slice(m);
        let bottom = [mat[(3, 0)], mat[(3, 1)], mat[(3, 2)], mat[(3, 3)]];
        ensure_arg!(
            bottom.iter().zip([0.0, 0.0, 0.0, 1.0]).all(|(a, b)| (a - b).abs() <= 1e-9),
            "last row of a rigid transform must be [0 0 0 1], got {bottom:?}"
        );
        Pose::new(
            mat.fixed_view::<3, 3>(0, 0).into_owned(),
            mat.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0],
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1],
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2],
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    /// Camera placed at `eye` looking at `target`; `up` fixes the roll.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        ensure_arg!(forward.norm() > 1e-12, "eye and target coincide");
        let z = forward.normalize();
        let x = z.cross(&up);
        ensure_arg!(x.norm() > 1e-9, "up vector is parallel to the viewing direction");
        let x = x.normalize();
        let y = z.cross(&x);
        Pose::new(Matrix3::from_columns(&[x, y, z]), eye)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Maps a world point into this camera's frame.
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }
}

/// Metric depth image; 0 marks a missing reading.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        ensure_arg!(
            data.len() == width as usize * height as usize,
            "depth buffer has {} values, expected {}x{}",
            data.len(),
            width,
            height
        );
        ensure_arg!(
            data.iter().all(|d| d.is_finite() && *d >= 0.0),
            "depth values must be finite and non-negative"
        );
        Ok(DepthMap { width, height, data })
    }

    pub fn filled(width: u32, height: u32, depth: f32) -> Result<Self> {
        DepthMap::new(width, height, vec![depth; width as usize * height as usize])
    }

    /// Decodes integer depth units (e.g. millimeters with `units_per_meter = 1000`).
    pub fn from_units(width: u32, height: u32, raw: &[u16], units_per_meter: f64) -> Result<Self> {
        ensure_arg!(units_per_meter > 0.0, "depth scale must be positive");
        let data = raw.iter().map(|&d| (d as f64 / units_per_meter) as f32).collect();
        DepthMap::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, depth: f32) {
        let w = self.width as usize;
        self.data[v as usize * w + u as usize] = depth;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// One posed RGB-D observation.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: u32,
    pub rgb: RgbImage,
    pub depth: DepthMap,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

impl Frame {
    pub fn new(id: u32, rgb: RgbImage, depth: DepthMap, pose: Pose, intrinsics: CameraIntrinsics) -> Result<Self> {
        intrinsics.validate()?;
        ensure_arg!(
            rgb.width() == intrinsics.width && rgb.height() == intrinsics.height,
            "frame {id}: color image is {}x{}, intrinsics say {}x{}",
            rgb.width(),
            rgb.height(),
            intrinsics.width,
            intrinsics.height
        );
        ensure_arg!(
            depth.width() == intrinsics.width && depth.height() == intrinsics.height,
            "frame {id}: depth image is {}x{}, intrinsics say {}x{}",
            depth.width(),
            depth.height(),
            intrinsics.width,
            intrinsics.height
        );
        Ok(Frame {
            id,
            rgb,
            depth,
            pose,
            intrinsics,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelObservation {
    pub u: f64,
    pub v: f64,
    /// Depth along the camera +z axis.
    pub z: f64,
    pub on_image: bool,
}

impl PixelObservation {
    /// Nearest pixel, if it lies on the image.
    pub fn pixel(&self, k: &CameraIntrinsics) -> Option<(u32, u32)> {
        let (u, v) = (self.u.round(), self.v.round());
        (u >= 0.0 && v >= 0.0 && u < k.width as f64 && v < k.height as f64).then_some((u as u32, v as u32))
    }
}

/// Back-projects pixel `(u, v)` to world coordinates; `None` for a missing depth.
pub fn backproject(frame: &Frame, u: u32, v: u32) -> Result<Option<Vector3<f64>>> {
    let k = &frame.intrinsics;
    if u >= k.width || v >= k.height {
        return Err(Error::PixelOutOfBounds {
            u,
            v,
            width: k.width,
            height: k.height,
        });
    }
    Ok(backproject_unchecked(&frame.pose, k, u, v, frame.depth.get(u, v)))
}

pub(crate) fn backproject_unchecked(
    pose: &Pose,
    k: &CameraIntrinsics,
    u: u32,
    v: u32,
    depth: f32,
) -> Option<Vector3<f64>> {
    if !(depth.is_finite() && depth > 0.0) {
        return None;
    }
    let d = depth as f64;
    let cam = Vector3::new((u as f64 - k.cx) * d / k.fx, (v as f64 - k.cy) * d / k.fy, d);
    Some(pose.transform(&cam))
}

/// Projects a world point; `None` when it is behind (or on) the image plane.
pub fn project_with(pose: &Pose, k: &CameraIntrinsics, point: &Vector3<f64>) -> Option<PixelObservation> {
    let c = pose.to_camera(point);
    if !(c.z > 0.0) {
        return None;
    }
    let u = k.fx * c.x / c.z + k.cx;
    let v = k.fy * c.y / c.z + k.cy;
    Some(PixelObservation {
        u,
        v,
        z: c.z,
        on_image: k.contains(u, v),
    })
}

pub fn project(point: &Vector3<f64>, frame: &Frame) -> Option<PixelObservation> {
    project_with(&frame.pose, &frame.intrinsics, point)
}

/// Projection of `point` into `frame` if it is unobstructed there.
///
/// The depth map is sampled at the nearest pixel; interpolating across depth
/// edges would invent surfaces that do not exist.
pub fn visible_observation(point: &Vector3<f64>, frame: &Frame, tol: f64) -> Option<PixelObservation> {
    let obs = project(point, frame)?;
    if !obs.on_image {
        return None;
    }
    let (u, v) = obs.pixel(&frame.intrinsics)?;
    let d = frame.depth.get(u, v) as f64;
    (d > 0.0 && (obs.z - d).abs() <= tol).then_some(obs)
}

pub fn visible(point: &Vector3<f64>, frame: &Frame, tol: f64) -> bool {
    visible_observation(point, frame, tol).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn flat_frame(depth: f32) -> Frame {
        let k = camera();
        Frame::new(
            0,
            RgbImage::new(k.width, k.height),
            DepthMap::filled(k.width, k.height, depth).unwrap(),
            Pose::identity(),
            k,
        )
        .unwrap()
    }

    #[test]
    fn backproject_principal_point() {
        let f = flat_frame(2.0);
        let p = backproject(&f, 320, 240).unwrap().unwrap();
        assert_abs_diff_eq!(p, Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn backproject_off_axis() {
        let f = flat_frame(2.0);
        // (420 − 320)·2/500 = 0.4
        let p = backproject(&f, 420, 240).unwrap().unwrap();
        assert_abs_diff_eq!(p, Vector3::new(0.4, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn backproject_out_of_bounds() {
        let f = flat_frame(2.0);
        assert!(matches!(backproject(&f, 820, 240), Err(Error::PixelOutOfBounds { .. })));
    }

    #[test]
    fn backproject_missing_depth() {
        let mut f = flat_frame(2.0);
        f.depth.set(5, 5, 0.0);
        assert_eq!(backproject(&f, 5, 5).unwrap(), None);
    }

    #[test]
    fn project_examples() {
        let f = flat_frame(2.0);
        let obs = project(&Vector3::new(0.0, 0.0, 2.0), &f).unwrap();
        assert_eq!((obs.u, obs.v, obs.z), (320.0, 240.0, 2.0));
        assert!(obs.on_image);
        assert!(project(&Vector3::new(0.0, 0.0, -1.0), &f).is_none());
        let off = project(&Vector3::new(5.0, 0.0, 1.0), &f).unwrap();
        assert!(!off.on_image);
    }

    #[test]
    fn visibility() {
        let f = flat_frame(2.0);
        assert!(visible(&Vector3::new(0.1, 0.0, 2.0), &f, 0.05));
        assert!(!visible(&Vector3::new(0.1, 0.0, 2.5), &f, 0.05));
        assert!(!visible(&Vector3::new(5.0, 0.0, 2.0), &f, 0.05));
    }

    #[test]
    fn pose_validation() {
        let bad = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(bad, Vector3::zeros()).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(reflect, Vector3::zeros()).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 500.0, 320.0, 240.0, 640, 480).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 640.0, 240.0, 640, 480).is_err());
    }

    #[test]
    fn look_at_points_forward() {
        let pose = Pose::look_at(Vector3::new(0.0, 0.0, -3.0), Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0)).unwrap();
        let c = pose.to_camera(&Vector3::zeros());
        assert_abs_diff_eq!(c, Vector3::new(0.0, 0.0, 3.0), epsilon = 1e-12);
        let m = pose.to_row_major();
        assert_eq!(Pose::from_row_major(&m).unwrap(), pose);
    }

    #[test]
    fn frame_dimension_mismatch() {
        let k = camera();
        let r = Frame::new(1, RgbImage::new(10, 10), DepthMap::filled(640, 480, 1.0).unwrap(), Pose::identity(), k);
        assert!(r.is_err());
        assert!(DepthMap::new(2, 1, vec![1.0, f32::NAN]).is_err());
    }
}
