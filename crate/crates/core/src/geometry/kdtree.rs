use nalgebra::Vector3;
use rayon::prelude::*;

use super::GeometryError;

/// Static 3-d tree over a borrowed point set.
///
/// Distances use the same `dx² + dy² + dz²` evaluation order as a plain
/// scan, so nearest distances agree bit for bit with brute force.
pub struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    nodes: Vec<Node>,
    root: Option<usize>,
}

struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

#[inline]
pub(crate) fn dist_sq(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Vector3<f64>]) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build(points, &mut idx, 0, &mut nodes);
        Self { points, nodes, root }
    }

    fn build(points: &[Vector3<f64>], idx: &mut [usize], depth: usize, nodes: &mut Vec<Node>) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % 3;
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let point = idx[mid];
        let slot = nodes.len();
        nodes.push(Node { point, axis, left: None, right: None });
        let (lo, rest) = idx.split_at_mut(mid);
        let left = Self::build(points, lo, depth + 1, nodes);
        let right = Self::build(points, &mut rest[1..], depth + 1, nodes);
        nodes[slot].left = left;
        nodes[slot].right = right;
        Some(slot)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point to `query`, skipping index `exclude`. Returns the index
    /// and the squared distance.
    pub fn nearest(&self, query: &Vector3<f64>, exclude: Option<usize>) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut stack = Vec::with_capacity(64);
        if let Some(r) = self.root {
            stack.push((r, 0.0f64));
        }
        while let Some((ni, bound)) = stack.pop() {
            if best.is_some_and(|(_, d)| bound > d) {
                continue;
            }
            let node = &self.nodes[ni];
            let p = &self.points[node.point];
            if exclude != Some(node.point) {
                let d = dist_sq(query, p);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((node.point, d));
                }
            }
            let diff = query[node.axis] - p[node.axis];
            let (near, far) = if diff < 0.0 { (node.left, node.right) } else { (node.right, node.left) };
            if let Some(f) = far {
                stack.push((f, diff * diff));
            }
            if let Some(n) = near {
                stack.push((n, 0.0));
            }
        }
        best
    }
}

/// Mean distance from each point to its nearest other point.
pub fn avg_nn_distance(points: &[Vector3<f64>]) -> Result<f64, GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::Degenerate { needed: 2, got: points.len() });
    }
    let tree = KdTree::new(points);
    let dists: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| tree.nearest(&points[i], Some(i)).expect("at least two points").1.sqrt())
        .collect();
    Ok(dists.iter().sum::<f64>() / points.len() as f64)
}
