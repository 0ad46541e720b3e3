//! Reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ovseg::cloud::{CloudPoint, LabeledCloud, Provenance, UNASSIGNED};
use ovseg::region::{PointGeometry, RegionGrowParams, Segmentation};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cloud_of(pts: &[[f64; 3]]) -> LabeledCloud {
    LabeledCloud {
        points: pts
            .iter()
            .map(|p| CloudPoint {
                position: [p[0] as f32, p[1] as f32, p[2] as f32],
                color: [0; 3],
                frame_id: 0,
                pixel: [0, 0],
                segment_id: UNASSIGNED,
                class_id: UNASSIGNED,
            })
            .collect(),
        provenance: Provenance::default(),
    }
}

/// O(n²) neighbor lists: the `k − 1` nearest other points by (distance², index).
pub fn brute_knn(pos: &[[f64; 3]], k: usize) -> Vec<Vec<u32>> {
    (0..pos.len())
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..pos.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let s: f64 = (0..3).map(|a| (pos[i][a] - pos[j][a]).powi(2)).sum();
                    (s, j)
                })
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k - 1).map(|(_, j)| j as u32).collect()
        })
        .collect()
}

/// PCA over each point and its neighbors; largest normal component made positive.
pub fn pca_geometry(pos: &[[f64; 3]], knn: &[Vec<u32>]) -> Vec<PointGeometry> {
    (0..pos.len())
        .map(|i| {
            let idx: Vec<usize> = std::iter::once(i).chain(knn[i].iter().map(|&j| j as usize)).collect();
            let n = idx.len() as f64;
            let mean = idx.iter().fold(Vector3::zeros(), |m, &j| m + Vector3::from(pos[j])) / n;
            let cov = idx.iter().fold(Matrix3::zeros(), |c, &j| {
                let d = Vector3::from(pos[j]) - mean;
                c + d * d.transpose()
            }) / n;
            let e = SymmetricEigen::new(cov);
            let mut ev: Vec<(f64, usize)> = (0..3).map(|a| (e.eigenvalues[a].max(0.0), a)).collect();
            ev.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = ev.iter().map(|v| v.0).sum();
            if total <= 1e-18 || ev[1].0 <= 1e-9 * ev[2].0 {
                return PointGeometry {
                    normal: Vector3::new(0.0, 0.0, 1.0),
                    curvature: 0.0,
                    degenerate: true,
                };
            }
            let mut normal: Vector3<f64> = e.eigenvectors.column(ev[0].1).normalize();
            if normal[normal.iamax()] < 0.0 {
                normal = -normal;
            }
            PointGeometry {
                normal,
                curvature: ev[0].0 / total,
                degenerate: false,
            }
        })
        .collect()
}

/// Region growing as a least fixpoint per seed.
///
/// A region is the seed plus every unclaimed point `q` that is a neighbor of
/// an expanding member `p` with `n_p · n_q ≥ cos(smoothness)`. The seed always
/// expands; other members expand when their curvature is within the threshold.
pub fn reference_grow(knn: &[Vec<u32>], geom: &[PointGeometry], params: &RegionGrowParams) -> Segmentation {
    let n = geom.len();
    let cos = params.smoothness.cos();
    let mut claimed = vec![false; n];
    let mut seeds: Vec<usize> = (0..n).collect();
    seeds.sort_by(|&a, &b| geom[a].curvature.total_cmp(&geom[b].curvature).then(a.cmp(&b)));
    let mut regions: Vec<BTreeSet<usize>> = Vec::new();
    for s in seeds {
        if claimed[s] {
            continue;
        }
        let mut region = BTreeSet::from([s]);
        loop {
            let mut grown = region.clone();
            for &p in &region {
                if p != s && geom[p].curvature > params.curvature_thresh {
                    continue;
                }
                for &q in &knn[p] {
                    let q = q as usize;
                    if !claimed[q] && geom[p].normal.dot(&geom[q].normal) >= cos {
                        grown.insert(q);
                    }
                }
            }
            if grown.len() == region.len() {
                break;
            }
            region = grown;
        }
        for &m in &region {
            claimed[m] = true;
        }
        regions.push(region);
    }
    let mut labels = vec![UNASSIGNED; n];
    let mut segments = Vec::new();
    for r in regions.into_iter().filter(|r| r.len() >= params.min_size) {
        for &m in &r {
            labels[m] = segments.len() as i32;
        }
        segments.push(r.into_iter().collect());
    }
    Segmentation { labels, segments }
}

/// Random mixture of noisy planar patches, sphere caps and scattered points.
pub fn random_cloud(r: &mut ChaCha8Rng, max_points: usize) -> Vec<[f64; 3]> {
    let target = r.random_range(50..=max_points);
    let mut pts = Vec::with_capacity(target);
    while pts.len() < target {
        let left = target - pts.len();
        let m = r.random_range(1..=left.min(600));
        let c = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let noise = [0.0, 1e-4, 3e-3][r.random_range(0..3)];
        match r.random_range(0..4) {
            0 | 1 => {
                let u = Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
                    .try_normalize(1e-6)
                    .unwrap_or_else(Vector3::x);
                let v = u.cross(&Vector3::new(0.3, -0.5, 0.8)).try_normalize(1e-6).unwrap_or_else(Vector3::y);
                let ext = r.random_range(0.1..1.0);
                for _ in 0..m {
                    let (a, b) = (r.random_range(-ext..ext), r.random_range(-ext..ext));
                    let p = Vector3::from(c) + u * a + v * b;
                    pts.push([
                        p.x + r.random_range(-1.0..=1.0) * noise,
                        p.y + r.random_range(-1.0..=1.0) * noise,
                        p.z + r.random_range(-1.0..=1.0) * noise,
                    ]);
                }
            }
            2 => {
                let rad = r.random_range(0.1..0.8);
                for _ in 0..m {
                    let d = Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
                        .try_normalize(1e-6)
                        .unwrap_or_else(Vector3::z);
                    let p = Vector3::from(c) + d * (rad + r.random_range(-1.0..=1.0) * noise);
                    pts.push([p.x, p.y, p.z]);
                }
            }
            _ => {
                for _ in 0..m {
                    pts.push([
                        c[0] + r.random_range(-0.5..0.5),
                        c[1] + r.random_range(-0.5..0.5),
                        c[2] + r.random_range(-0.5..0.5),
                    ]);
                }
            }
        }
    }
    // Round-trip through f32 so positions match what the cloud stores.
    pts.iter().map(|p| p.map(|x| x as f32 as f64)).collect()
}

pub fn random_params(r: &mut ChaCha8Rng, n: usize) -> RegionGrowParams {
    RegionGrowParams {
        k: r.random_range(3..=40.min(n)),
        smoothness: r.random_range(0.02..0.6),
        curvature_thresh: if r.random_bool(0.3) { 1.0 } else { r.random_range(0.0..0.2) },
        min_size: r.random_range(1..=40),
    }
}

/// Two perpendicular 1 m × 1 m grids sharing the edge x = 0, z = 0.
/// Returns positions and the plane index of each point.
pub fn orthogonal_planes(spacing: f64) -> (Vec<[f64; 3]>, Vec<usize>) {
    let n = (1.0 / spacing).round() as usize;
    let mut pts = Vec::new();
    let mut plane = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let (a, b) = ((i as f64 + 0.5) * spacing, (j as f64 + 0.5) * spacing);
            pts.push([a, b, 0.0]);
            plane.push(0);
            pts.push([0.0, b, a]);
            plane.push(1);
        }
    }
    (pts, plane)
}

/// Per-class counts by direct enumeration, then the three averages.
/// Ground-truth −1 is skipped; a predicted −1 never matches.
pub fn brute_metrics(gt: &[i32], pred: &[i32]) -> (f64, f64, f64) {
    let classes: BTreeSet<i32> = gt.iter().copied().filter(|&g| g >= 0).collect();
    let (mut iou_sum, mut w_sum, mut n_sum, mut acc_sum) = (0.0, 0.0, 0.0, 0.0);
    for &c in &classes {
        let (mut tp, mut fp, mut fn_, mut n) = (0u64, 0u64, 0u64, 0u64);
        for (&g, &p) in gt.iter().zip(pred) {
            if g < 0 {
                continue;
            }
            match (g == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
            if g == c {
                n += 1;
            }
        }
        let iou = if tp + fp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fp + fn_) as f64 };
        let acc = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        iou_sum += iou;
        w_sum += n as f64 * iou;
        n_sum += n as f64;
        acc_sum += acc;
    }
    let k = classes.len() as f64;
    (iou_sum / k, w_sum / n_sum, acc_sum / k)
}

/// Random labeling with some unlabeled ground truth and unassigned predictions.
pub fn random_labeling(r: &mut ChaCha8Rng, max_points: usize) -> (Vec<i32>, Vec<i32>) {
    let n = r.random_range(1..=max_points);
    let classes = r.random_range(1..=12);
    let gt: Vec<i32> = (0..n)
        .map(|i| if i == 0 { 0 } else if r.random_bool(0.05) { -1 } else { r.random_range(0..classes) })
        .collect();
    let pred = gt
        .iter()
        .map(|&g| {
            if r.random_bool(0.05) {
                -1
            } else if g >= 0 && r.random_bool(0.6) {
                g
            } else {
                r.random_range(0..classes + 2)
            }
        })
        .collect();
    (gt, pred)
}

/// Rendered frames of random scenes from random viewpoints, depth in millimeters.
pub fn random_frames(seed: u64, count: usize) -> Vec<ovseg::geometry::Frame> {
    use ovseg::geometry::{CameraIntrinsics, Pose};
    use ovseg::synth::{render, Scene};
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let scene = Scene::random(r.random(), r.random_range(1..=5)).unwrap();
            let a: f64 = r.random_range(-0.8..0.8);
            let eye = Vector3::new(3.5 * a.sin(), -3.5 * a.cos(), r.random_range(0.5..2.5));
            let target = Vector3::new(r.random_range(-0.5..0.5), 0.0, 0.4);
            let pose = Pose::look_at(eye, target, Vector3::z()).unwrap();
            let f = r.random_range(100.0..200.0);
            let k = CameraIntrinsics::new(f, f * r.random_range(0.95..1.05), 79.5, 59.5, 160, 120).unwrap();
            render(&scene, i as u32, pose, k, 1000.0).unwrap().frame
        })
        .collect()
}
