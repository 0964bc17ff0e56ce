//! Exact nearest-neighbor search over 3D points.
//!
//! Axis-aligned k-d tree with cycling split axes. All queries are exact;
//! ties on distance are broken toward the lowest point index, matching the
//! exhaustive-search oracle.

#[derive(Debug)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<Box<Node>>,
    right: Option<Box<Node>>,
}

/// Exact k-d tree over a fixed set of points.
#[derive(Debug)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    root: Option<Box<Node>>,
}

impl KdTree {
    pub fn build(points: Vec<[f64; 3]>) -> Self {
        let mut indices: Vec<usize> = (0..points.len()).collect();
        let root = build_node(&points, &mut indices, 0);
        KdTree { points, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, query: [f64; 3]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        nearest_rec(&self.points, self.root.as_deref(), query, &mut best);
        best
    }

    /// The `k` nearest points as `(index, squared distance)`, sorted by
    /// `(distance, index)`.
    pub fn k_nearest(&self, query: [f64; 3], k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        k_nearest_rec(&self.points, self.root.as_deref(), query, k, &mut best);
        best.into_iter().map(|(d, i)| (i, d)).collect()
    }
}

fn build_node(points: &[[f64; 3]], indices: &mut [usize], depth: usize) -> Option<Box<Node>> {
    if indices.is_empty() {
        return None;
    }
    let axis = depth % 3;
    indices.sort_unstable_by(|&a, &b| {
        points[a][axis]
            .total_cmp(&points[b][axis])
            .then(a.cmp(&b))
    });
    let mid = indices.len() / 2;
    let point = indices[mid];
    let (left, rest) = indices.split_at_mut(mid);
    let right = &mut rest[1..];
    Some(Box::new(Node {
        point,
        axis,
        left: build_node(points, left, depth + 1),
        right: build_node(points, right, depth + 1),
    }))
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn nearest_rec(
    points: &[[f64; 3]],
    node: Option<&Node>,
    query: [f64; 3],
    best: &mut (usize, f64),
) {
    let Some(node) = node else { return };
    let d = dist2(query, points[node.point]);
    if d < best.1 || (d == best.1 && node.point < best.0) {
        *best = (node.point, d);
    }
    let diff = query[node.axis] - points[node.point][node.axis];
    let (near, far) = if diff <= 0.0 {
        (node.left.as_deref(), node.right.as_deref())
    } else {
        (node.right.as_deref(), node.left.as_deref())
    };
    nearest_rec(points, near, query, best);
    if diff * diff <= best.1 {
        nearest_rec(points, far, query, best);
    }
}

fn k_nearest_rec(
    points: &[[f64; 3]],
    node: Option<&Node>,
    query: [f64; 3],
    k: usize,
    best: &mut Vec<(f64, usize)>,
) {
    let Some(node) = node else { return };
    let d = dist2(query, points[node.point]);
    let key = (d, node.point);
    if best.len() < k || key < *best.last().unwrap() {
        let pos = best.partition_point(|&e| e < key);
        best.insert(pos, key);
        if best.len() > k {
            best.pop();
        }
    }
    let diff = query[node.axis] - points[node.point][node.axis];
    let (near, far) = if diff <= 0.0 {
        (node.left.as_deref(), node.right.as_deref())
    } else {
        (node.right.as_deref(), node.left.as_deref())
    };
    k_nearest_rec(points, near, query, k, best);
    let worst = if best.len() < k {
        f64::INFINITY
    } else {
        best.last().unwrap().0
    };
    if diff * diff <= worst {
        k_nearest_rec(points, far, query, k, best);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect()
    }

    fn exhaustive_k_nearest(points: &[[f64; 3]], q: [f64; 3], k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (dist2(q, *p), i))
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.into_iter().take(k).map(|(d, i)| (i, d)).collect()
    }

    #[test]
    fn nearest_matches_exhaustive() {
        let points = random_points(500, 41);
        let tree = KdTree::build(points.clone());
        for q in random_points(200, 42) {
            let got = tree.nearest(q);
            let want = exhaustive_k_nearest(&points, q, 1)[0];
            assert_eq!(got, want);
        }
    }

    #[test]
    fn k_nearest_matches_exhaustive_sort() {
        let points = random_points(64, 43);
        let tree = KdTree::build(points.clone());
        for q in random_points(50, 44) {
            let got = tree.k_nearest(q, 3);
            let want = exhaustive_k_nearest(&points, q, 3);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn ties_prefer_lowest_index() {
        // Two coincident points; both are at the same distance from any query.
        let points = vec![[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 0.0, 0.0]];
        let tree = KdTree::build(points);
        assert_eq!(tree.nearest([0.0, 0.0, 0.0]).0, 0);
        let kn = tree.k_nearest([0.0, 0.0, 0.0], 1);
        assert_eq!(kn[0].0, 0);
    }

    #[test]
    fn query_point_in_set_has_zero_distance() {
        let points = random_points(100, 45);
        let tree = KdTree::build(points.clone());
        for (i, p) in points.iter().enumerate() {
            let (idx, d) = tree.nearest(*p);
            assert_eq!(d, 0.0);
            // Duplicates are astronomically unlikely with this generator.
            assert_eq!(idx, i);
        }
    }
}
