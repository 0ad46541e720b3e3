//! Static 3-d tree for exact k-nearest-neighbor queries.
//!
//! Neighbors are ordered by `(squared distance, index)`, so equidistant
//! points resolve the same way a brute-force sort would.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
pub fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn build(points: Vec<[f64; 3]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build_node(&points, &mut order, 0, points.len(), &mut nodes);
        }
        KdTree { points, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64; 3] {
        &self.points[i]
    }

    /// The `k` nearest points to `query`, closest first.
    pub fn nearest(&self, query: &[f64; 3], k: usize) -> Vec<Neighbor> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        heap.into_sorted_vec()
    }

    pub fn nearest_one(&self, query: &[f64; 3]) -> Option<Neighbor> {
        self.nearest(query, 1).into_iter().next()
    }

    fn search(&self, node: usize, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = Neighbor {
                        index: i,
                        dist2: dist2(q, &self.points[i]),
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // Equal distances must still be visited: a lower index may win the tie.
                if heap.len() < k || diff * diff <= heap.peek().expect("heap is non-empty").dist2 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

fn build_node(points: &[[f64; 3]], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut order[start..end];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in slice.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if hi[axis] - lo[axis] <= 0.0 {
        // All coincident.
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[slice[mid]][axis];
    // Left holds everything ≤ value after the partition step below.
    let mut split = 0;
    for j in 0..slice.len() {
        if points[slice[j]][axis] <= value {
            slice.swap(split, j);
            split += 1;
        }
    }
    if split == slice.len() {
        // Median equals the maximum; split strictly below it instead.
        let mut s = 0;
        for j in 0..slice.len() {
            if points[slice[j]][axis] < value {
                slice.swap(s, j);
                s += 1;
            }
        }
        let below = slice[..s].iter().map(|&i| points[i][axis]).fold(f64::NEG_INFINITY, f64::max);
        nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = build_node(points, order, start, start + s, nodes);
        let right = build_node(points, order, start + s, end, nodes);
        nodes[id] = Node::Split {
            axis,
            value: below,
            left,
            right,
        };
        return id;
    }
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_node(points, order, start, start + split, nodes);
    let right = build_node(points, order, start + split, end, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[[f64; 3]], q: &[f64; 3], k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = points
            .iter()
            .enumerate()
            .map(|(index, p)| Neighbor { index, dist2: dist2(q, p) })
            .collect();
        all.sort();
        all.truncate(k);
        all
    }

    #[test]
    fn grid_ties_match_brute_force() {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                pts.push([i as f64 * 0.01, j as f64 * 0.01, 0.0]);
            }
        }
        let tree = KdTree::build(pts.clone());
        for q in [[0.05, 0.05, 0.0], [0.0, 0.0, 0.0], [0.095, 0.1, 0.01]] {
            for k in [1, 4, 9, 30] {
                assert_eq!(tree.nearest(&q, k), brute(&pts, &q, k));
            }
        }
    }

    #[test]
    fn coincident_points() {
        let pts = vec![[1.0, 1.0, 1.0]; 40];
        let tree = KdTree::build(pts.clone());
        let got: Vec<usize> = tree.nearest(&[1.0, 1.0, 1.0], 3).iter().map(|n| n.index).collect();
        assert_eq!(got, vec![0, 1, 2]);
    }

    #[test]
    fn empty_tree() {
        let tree = KdTree::build(Vec::new());
        assert!(tree.nearest(&[0.0; 3], 3).is_empty());
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            pts in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..300),
            q in prop::array::uniform3(-1.5f64..1.5),
            k in 1usize..40,
        ) {
            let tree = KdTree::build(pts.clone());
            prop_assert_eq!(tree.nearest(&q, k), brute(&pts, &q, k));
        }
    }
}
