//! Class-free region-growing segmentation over a k-nearest-neighbor graph.

use std::collections::{HashMap, VecDeque};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::cloud::{LabeledCloud, UNASSIGNED};
use crate::error::{ensure_arg, Result};
use crate::kdtree::KdTree;
use crate::par;

/// Surface normal and normalized curvature `λ₀ / (λ₀ + λ₁ + λ₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointGeometry {
    pub normal: Vector3<f64>,
    pub curvature: f64,
    pub degenerate: bool,
}

impl PointGeometry {
    const DEGENERATE: PointGeometry = PointGeometry {
        normal: Vector3::new(0.0, 0.0, 1.0),
        curvature: 0.0,
        degenerate: true,
    };
}

/// k-nearest-neighbor lists. `k` counts the query point itself, so each
/// list holds the `k − 1` closest other points, ordered by distance then index.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    k: usize,
    neighbors: Vec<Vec<u32>>,
}

impl KnnGraph {
    pub fn build(cloud: &LabeledCloud, k: usize) -> Result<Self> {
        Self::from_positions(&cloud.positions(), k)
    }

    pub fn from_positions(positions: &[[f64; 3]], k: usize) -> Result<Self> {
        ensure_arg!(k >= 3, "neighbor count must be at least 3, got {k}");
        ensure_arg!(
            positions.len() >= k,
            "cloud has {} points, fewer than k = {k}",
            positions.len()
        );
        let tree = KdTree::build(positions.to_vec());
        let neighbors = par::map_range(positions.len(), |i| {
            tree.nearest(&positions[i], k)
                .into_iter()
                .filter(|n| n.index != i)
                .take(k - 1)
                .map(|n| n.index as u32)
                .collect()
        });
        Ok(KnnGraph { k, neighbors })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }
}

/// Camera centers keyed by frame id, used to orient normals.
pub type Viewpoints = HashMap<u32, Vector3<f64>>;

pub fn estimate_geometry(cloud: &LabeledCloud, k: usize, viewpoints: &Viewpoints) -> Result<Vec<PointGeometry>> {
    let graph = KnnGraph::build(cloud, k)?;
    Ok(estimate_geometry_with(cloud, &graph, viewpoints))
}

/// PCA normals and curvature over each point's neighborhood (itself included).
///
/// Normals face the camera that observed the point. Points without a known
/// viewpoint get the sign that makes their largest component positive.
pub fn estimate_geometry_with(cloud: &LabeledCloud, graph: &KnnGraph, viewpoints: &Viewpoints) -> Vec<PointGeometry> {
    let pos = cloud.positions();
    par::map_range(pos.len(), |i| {
        let nbrs = graph.neighbors(i);
        let mut g = local_geometry(&pos, i, nbrs);
        if !g.degenerate {
            let p = Vector3::from(pos[i]);
            let flip = match viewpoints.get(&cloud.points[i].frame_id) {
                Some(eye) => g.normal.dot(&(eye - p)) < 0.0,
                None => {
                    let a = g.normal.iamax();
                    g.normal[a] < 0.0
                }
            };
            if flip {
                g.normal = -g.normal;
            }
        }
        g
    })
}

fn local_geometry(pos: &[[f64; 3]], i: usize, nbrs: &[u32]) -> PointGeometry {
    let n = (nbrs.len() + 1) as f64;
    let mut mean = Vector3::from(pos[i]);
    for &j in nbrs {
        mean += Vector3::from(pos[j as usize]);
    }
    mean /= n;
    let mut cov = Matrix3::zeros();
    let mut acc = |p: &[f64; 3]| {
        let d = Vector3::from(*p) - mean;
        cov += d * d.transpose();
    };
    acc(&pos[i]);
    for &j in nbrs {
        acc(&pos[j as usize]);
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let l0 = eig.eigenvalues[order[0]].max(0.0);
    let l1 = eig.eigenvalues[order[1]].max(0.0);
    let l2 = eig.eigenvalues[order[2]].max(0.0);
    let total = l0 + l1 + l2;
    // Coincident or colinear neighborhoods have no defined plane.
    if total <= 1e-18 || l1 <= 1e-9 * l2 {
        return PointGeometry::DEGENERATE;
    }
    let normal = eig.eigenvectors.column(order[0]).normalize();
    PointGeometry {
        normal,
        curvature: l0 / total,
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionGrowParams {
    pub k: usize,
    /// Maximum angle (radians) between neighboring normals.
    pub smoothness: f64,
    /// Points above this curvature join regions but do not expand them.
    pub curvature_thresh: f64,
    pub min_size: usize,
}

impl Default for RegionGrowParams {
    fn default() -> Self {
        RegionGrowParams {
            k: 100,
            smoothness: 0.05,
            curvature_thresh: 1.0,
            min_size: 50,
        }
    }
}

impl RegionGrowParams {
    pub fn validate(&self) -> Result<()> {
        ensure_arg!(self.k >= 3, "k must be at least 3");
        ensure_arg!(self.smoothness > 0.0, "smoothness must be positive");
        ensure_arg!(self.min_size >= 1, "min_size must be at least 1");
        ensure_arg!(self.curvature_thresh >= 0.0, "curvature threshold must be non-negative");
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    /// Segment id per point, `-1` when unassigned.
    pub labels: Vec<i32>,
    /// Point indices of each segment, ascending.
    pub segments: Vec<Vec<usize>>,
}

impl Segmentation {
    pub fn count(&self) -> usize {
        self.segments.len()
    }

    pub fn unassigned(&self) -> usize {
        self.labels.iter().filter(|&&l| l == UNASSIGNED).count()
    }

    pub fn apply(&self, cloud: &mut LabeledCloud) {
        for (p, &l) in cloud.points.iter_mut().zip(&self.labels) {
            p.segment_id = l;
        }
    }

    /// Recovers a segmentation from the segment ids stored on a cloud.
    pub fn from_cloud(cloud: &LabeledCloud) -> Self {
        let labels: Vec<i32> = cloud.points.iter().map(|p| p.segment_id).collect();
        let count = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
        let mut segments = vec![Vec::new(); count];
        for (i, &l) in labels.iter().enumerate() {
            if l >= 0 {
                segments[l as usize].push(i);
            }
        }
        Segmentation { labels, segments }
    }
}

/// Seed visiting order: ascending curvature, then index.
pub fn seed_order(geometry: &[PointGeometry]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..geometry.len()).collect();
    order.sort_by(|&a, &b| geometry[a].curvature.total_cmp(&geometry[b].curvature).then(a.cmp(&b)));
    order
}

pub fn region_grow(cloud: &LabeledCloud, geometry: &[PointGeometry], params: &RegionGrowParams) -> Result<Segmentation> {
    params.validate()?;
    let graph = KnnGraph::build(cloud, params.k)?;
    region_grow_with(&graph, geometry, params)
}

/// Grows regions from low-curvature seeds across the neighbor graph.
///
/// A neighbor joins when its normal is within `smoothness` of the current
/// point's normal; it becomes a growth front only if its curvature is at most
/// `curvature_thresh`. Regions smaller than `min_size` are dropped.
pub fn region_grow_with(graph: &KnnGraph, geometry: &[PointGeometry], params: &RegionGrowParams) -> Result<Segmentation> {
    params.validate()?;
    ensure_arg!(
        graph.len() == geometry.len(),
        "geometry has {} entries for {} points",
        geometry.len(),
        graph.len()
    );
    const UNSEEN: i32 = i32::MIN;
    let cos_thresh = params.smoothness.cos();
    let n = geometry.len();
    let mut raw = vec![UNSEEN; n];
    let mut regions: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();

    for seed in seed_order(geometry) {
        if raw[seed] != UNSEEN {
            continue;
        }
        let id = regions.len() as i32;
        let mut members = vec![seed];
        raw[seed] = id;
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            let np = &geometry[p].normal;
            for &q in graph.neighbors(p) {
                let q = q as usize;
                if raw[q] != UNSEEN {
                    continue;
                }
                if np.dot(&geometry[q].normal) >= cos_thresh {
                    raw[q] = id;
                    members.push(q);
                    if geometry[q].curvature <= params.curvature_thresh {
                        queue.push_back(q);
                    }
                }
            }
        }
        regions.push(members);
    }

    let mut labels = vec![UNASSIGNED; n];
    let mut segments = Vec::new();
    for mut members in regions {
        if members.len() < params.min_size {
            continue;
        }
        members.sort_unstable();
        let id = segments.len() as i32;
        for &m in &members {
            labels[m] = id;
        }
        segments.push(members);
    }
    Ok(Segmentation { labels, segments })
}
