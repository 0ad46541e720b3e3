//! Ray-cast synthetic scenes with planted concepts.
//!
//! Objects are flat-colored planes, boxes and spheres floating in an empty
//! world (z up). The background renders black with depth 0. Cameras orbit
//! the origin on an arc and look at the scene center.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{sample_indices, voxel_downsample, CloudPoint, LabeledCloud, Provenance, UNASSIGNED};
use crate::config::RunConfig;
use crate::error::{ensure_arg, Error, Result};
use crate::features::{build_prompt_list, ovpe, ConceptTable, MockEmbedder, PaletteEntry, PromptRole};
use crate::geometry::{backproject, CameraIntrinsics, DepthMap, Frame, Pose};
use crate::io::manifest::{format_poses, write_frame_images, FrameEntry, ManifestFile, PoseSource, PromptFiles};
use crate::io::{ply, write_json, CloudLabels, PoseConvention};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Rectangle through `center` with unit `normal`; `u_axis` ⟂ `normal`.
    Plane {
        center: [f64; 3],
        normal: [f64; 3],
        u_axis: [f64; 3],
        half: [f64; 2],
    },
    /// Axis-aligned box.
    Box { center: [f64; 3], half: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl Shape {
    /// Smallest positive ray parameter of an intersection.
    pub fn hit(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        const EPS: f64 = 1e-9;
        match self {
            Shape::Sphere { center, radius } => {
                let oc = o - v3(*center);
                let a = d.dot(d);
                let b = 2.0 * oc.dot(d);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)].into_iter().find(|t| *t > EPS)
            }
            Shape::Box { center, half } => {
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    let (min, max) = (center[a] - half[a], center[a] + half[a]);
                    if d[a].abs() < 1e-15 {
                        if o[a] < min || o[a] > max {
                            return None;
                        }
                        continue;
                    }
                    let (t0, t1) = ((min - o[a]) / d[a], (max - o[a]) / d[a]);
                    lo = lo.max(t0.min(t1));
                    hi = hi.min(t0.max(t1));
                }
                if hi < lo || hi <= EPS {
                    return None;
                }
                Some(if lo > EPS { lo } else { hi })
            }
            Shape::Plane {
                center,
                normal,
                u_axis,
                half,
            } => {
                let n = v3(*normal);
                let denom = n.dot(d);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let c = v3(*center);
                let t = n.dot(&(c - o)) / denom;
                if t <= EPS {
                    return None;
                }
                let rel = o + d * t - c;
                let u = v3(*u_axis);
                let v = n.cross(&u);
                (rel.dot(&u).abs() <= half[0] && rel.dot(&v).abs() <= half[1]).then_some(t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub label: String,
    pub color: [u8; 3],
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
}

/// Distinct flat colors; none is black.
pub const PALETTE: [[u8; 3]; 8] = [
    [220, 40, 40],
    [40, 180, 60],
    [50, 80, 220],
    [230, 200, 30],
    [200, 60, 200],
    [40, 200, 210],
    [240, 130, 20],
    [140, 90, 50],
];

/// Labels used for randomly generated objects.
pub const CONCEPTS: [&str; 8] = ["poster", "cabinet", "ball", "monitor", "box", "globe", "painting", "crate"];

/// Evaluation-list labels that no object carries.
pub const DISTRACTORS: [&str; 12] = [
    "chair", "table", "lamp", "sofa", "door", "window", "plant", "shelf", "rug", "vase", "clock", "bed",
];

impl Scene {
    /// A panel, a box and a sphere side by side.
    pub fn three_objects() -> Scene {
        Scene {
            objects: vec![
                SceneObject {
                    label: "poster".into(),
                    color: PALETTE[0],
                    shape: Shape::Plane {
                        center: [-1.3, 0.0, 0.6],
                        normal: [0.0, -1.0, 0.0],
                        u_axis: [1.0, 0.0, 0.0],
                        half: [0.35, 0.35],
                    },
                },
                SceneObject {
                    label: "cabinet".into(),
                    color: PALETTE[1],
                    shape: Shape::Box {
                        center: [0.0, 0.0, 0.35],
                        half: [0.3, 0.3, 0.35],
                    },
                },
                SceneObject {
                    label: "ball".into(),
                    color: PALETTE[2],
                    shape: Shape::Sphere {
                        center: [1.3, 0.0, 0.5],
                        radius: 0.4,
                    },
                },
            ],
        }
    }

    /// `n` (≤ 8) random objects in a row, 1.3 m apart.
    pub fn random(seed: u64, n: usize) -> Result<Scene> {
        ensure_arg!((1..=PALETTE.len()).contains(&n), "between 1 and {} objects", PALETTE.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = -1.3 * (n as f64 - 1.0) / 2.0;
        let objects = (0..n)
            .map(|i| {
                let x = x0 + 1.3 * i as f64;
                let shape = match rng.random_range(0..3) {
                    0 => Shape::Plane {
                        center: [x, 0.0, 0.6],
                        normal: [0.0, -1.0, 0.0],
                        u_axis: [1.0, 0.0, 0.0],
                        half: [rng.random_range(0.25..0.4), rng.random_range(0.25..0.4)],
                    },
                    1 => {
                        let h = rng.random_range(0.25..0.35);
                        Shape::Box {
                            center: [x, 0.0, h],
                            half: [rng.random_range(0.25..0.35), rng.random_range(0.25..0.35), h],
                        }
                    }
                    _ => Shape::Sphere {
                        center: [x, 0.0, 0.5],
                        radius: rng.random_range(0.4..0.45),
                    },
                };
                SceneObject {
                    label: CONCEPTS[i].into(),
                    color: PALETTE[i],
                    shape,
                }
            })
            .collect();
        Ok(Scene { objects })
    }

    /// Nearest object hit by the ray, with its parameter.
    pub fn hit(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, usize)> {
        self.objects
            .iter()
            .enumerate()
            .filter_map(|(i, obj)| obj.shape.hit(o, d).map(|t| (t, i)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
    }

    pub fn concepts(&self) -> ConceptTable {
        ConceptTable::from_palette(
            self.objects
                .iter()
                .map(|o| PaletteEntry {
                    color: o.color,
                    label: o.label.clone(),
                })
                .collect(),
        )
    }
}

/// A rendered frame with the object index hit at every pixel (−1 for background).
#[derive(Debug, Clone)]
pub struct Rendered {
    pub frame: Frame,
    pub ids: Vec<i32>,
}

/// Depth is quantized to `1 / depth_scale` meters so it survives 16-bit storage exactly.
pub fn render(scene: &Scene, id: u32, pose: Pose, k: CameraIntrinsics, depth_scale: f64) -> Result<Rendered> {
    let (w, h) = (k.width, k.height);
    let mut rgb = RgbImage::new(w, h);
    let mut depth = DepthMap::filled(w, h, 0.0)?;
    let mut ids = vec![-1; (w * h) as usize];
    let o = pose.center();
    for v in 0..h {
        for u in 0..w {
            let dc = Vector3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
            let d = pose.rotation() * dc;
            let Some((t, obj)) = scene.hit(&o, &d) else {
                continue;
            };
            let units = (t * depth_scale).round();
            if units < 1.0 || units > u16::MAX as f64 {
                continue;
            }
            depth.set(u, v, (units / depth_scale) as f32);
            rgb.put_pixel(u, v, Rgb(scene.objects[obj].color));
            ids[(v * w + u) as usize] = obj as i32;
        }
    }
    Ok(Rendered {
        frame: Frame::new(id, rgb, depth, pose, k)?,
        ids,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub orbit_radius: f64,
    pub camera_height: f64,
    /// Total arc swept by the cameras, degrees.
    pub arc_degrees: f64,
    pub depth_scale: f64,
    pub seed: u64,
    /// Run-configuration overrides written next to the manifest.
    pub stride: u32,
    pub pixel_step: u32,
    /// Region-growing angle threshold, radians. Coarse sampling of curved
    /// surfaces and box edges needs more slack than the default.
    pub smoothness: f64,
    pub dim: usize,
    pub noise: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            frames: 40,
            width: 320,
            height: 240,
            focal: 280.0,
            orbit_radius: 3.5,
            camera_height: 1.4,
            arc_degrees: 80.0,
            depth_scale: 1000.0,
            seed: 7,
            stride: 5,
            pixel_step: 2,
            smoothness: 0.2,
            dim: 128,
            noise: 0.1,
        }
    }
}

impl SynthOptions {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(
            self.focal,
            self.focal,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
            self.width,
            self.height,
        )
    }

    /// Camera-to-world poses along the arc, looking at the scene center.
    pub fn poses(&self) -> Result<Vec<Pose>> {
        let n = self.frames.max(1);
        let target = Vector3::new(0.0, 0.0, 0.4);
        (0..n)
            .map(|i| {
                let f = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
                let a = (f - 0.5) * self.arc_degrees.to_radians();
                let eye = Vector3::new(self.orbit_radius * a.sin(), -self.orbit_radius * a.cos(), self.camera_height);
                Pose::look_at(eye, target, Vector3::new(0.0, 0.0, 1.0))
            })
            .collect()
    }

    /// Configuration matching the scene: mock palette, stride, pixel step.
    pub fn run_config(&self, scene: &Scene) -> RunConfig {
        let mut c = RunConfig {
            stride: self.stride,
            pixel_step: self.pixel_step,
            smoothness: self.smoothness,
            seed: self.seed,
            ..RunConfig::default()
        };
        c.embedder.dim = self.dim;
        c.embedder.noise = self.noise;
        c.embedder.concepts = scene.concepts();
        c
    }
}

/// Renders all frames in memory.
pub fn render_all(scene: &Scene, opts: &SynthOptions) -> Result<Vec<Rendered>> {
    let k = opts.intrinsics()?;
    let poses = opts.poses()?;
    crate::par::map_range(poses.len(), |i| render(scene, i as u32, poses[i], k, opts.depth_scale))
        .into_iter()
        .collect()
}

/// Ground-truth cloud from the frames the run will sample, labeled by object index.
pub fn ground_truth(scene: &Scene, rendered: &[Rendered], opts: &SynthOptions, voxel: f64) -> Result<(LabeledCloud, CloudLabels)> {
    let mut points = Vec::new();
    let picked = sample_indices(rendered.len(), opts.stride);
    for &i in &picked {
        let r = &rendered[i];
        let k = &r.frame.intrinsics;
        for v in (0..k.height).step_by(opts.pixel_step as usize) {
            for u in (0..k.width).step_by(opts.pixel_step as usize) {
                let obj = r.ids[(v * k.width + u) as usize];
                if obj < 0 {
                    continue;
                }
                let Some(p) = backproject(&r.frame, u, v)? else {
                    continue;
                };
                points.push(CloudPoint {
                    position: [p.x as f32, p.y as f32, p.z as f32],
                    color: scene.objects[obj as usize].color,
                    frame_id: r.frame.id,
                    pixel: [u, v],
                    segment_id: UNASSIGNED,
                    class_id: obj,
                });
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud("no object is visible from the cameras".into()));
    }
    let cloud = LabeledCloud {
        points,
        provenance: Provenance {
            stride: opts.stride,
            frame_count: picked.len() as u32,
        },
    };
    let cloud = voxel_downsample(&cloud, voxel)?;
    let labels = CloudLabels {
        classes: scene
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| (i as i32, o.label.clone()))
            .collect(),
        ..Default::default()
    };
    Ok((cloud, labels))
}

/// Paths of a written scene.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest: PathBuf,
    pub config: PathBuf,
}

/// Writes frames, poses, ground truth, prompt files, a manifest and a run config into `dir`.
pub fn write_scene(scene: &Scene, opts: &SynthOptions, dir: &Path) -> Result<SynthOutput> {
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let rendered = render_all(scene, opts)?;
    let mut entries = Vec::with_capacity(rendered.len());
    for r in &rendered {
        let rgb = format!("frames/rgb_{:04}.png", r.frame.id);
        let depth = format!("frames/depth_{:04}.png", r.frame.id);
        write_frame_images(&r.frame, &dir.join(&rgb), &dir.join(&depth), opts.depth_scale)?;
        entries.push(FrameEntry {
            id: r.frame.id,
            rgb: rgb.into(),
            depth: depth.into(),
        });
    }
    let poses: Vec<Pose> = rendered.iter().map(|r| r.frame.pose).collect();
    let traj = dir.join("traj.txt");
    fs::write(&traj, format_poses(&poses)).map_err(|e| Error::io(&traj, e))?;

    let config = opts.run_config(scene);
    let (gt, gt_labels) = ground_truth(scene, &rendered, opts, config.voxel)?;
    ply::write_labeled(&dir.join("gt.ply"), &gt, &gt_labels)?;

    let mock = MockEmbedder::new(opts.seed, opts.dim, scene.concepts());
    let mut eval: Vec<String> = scene.objects.iter().map(|o| o.label.clone()).collect();
    let entropy = eval.clone();
    eval.extend(DISTRACTORS.iter().map(|s| s.to_string()));
    ovpe::write(
        &build_prompt_list(&eval, &mock, PromptRole::Evaluation, &config.template)?,
        &dir.join("eval.ovpe"),
    )?;
    ovpe::write(
        &build_prompt_list(&entropy, &mock, PromptRole::Entropy, &config.template)?,
        &dir.join("entropy.ovpe"),
    )?;

    let manifest = ManifestFile {
        intrinsics: opts.intrinsics()?,
        depth_scale: opts.depth_scale,
        poses: PoseSource {
            path: "traj.txt".into(),
            convention: PoseConvention::CameraToWorld,
        },
        frames: entries,
        ground_truth: Some("gt.ply".into()),
        prompts: PromptFiles {
            evaluation: "eval.ovpe".into(),
            entropy: "entropy.ovpe".into(),
        },
    };
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    let config_path = dir.join("config.toml");
    fs::write(&config_path, config.to_toml()?).map_err(|e| Error::io(&config_path, e))?;
    Ok(SynthOutput {
        manifest: manifest_path,
        config: config_path,
    })
}
