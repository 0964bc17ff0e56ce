//! Point-set distances and alignment: Chamfer, exact EMD, color MSE, and
//! k-NN color alignment.
//!
//! Chamfer sums squared nearest-neighbor distances over both sets (no 1/2
//! factor); EMD pairs points under `0.5 * ||x - y||^2`. Small instances are
//! solved exhaustively; above 256 points nearest-neighbor queries go through
//! the k-d tree, with identical results.

mod emd;
pub mod kdtree;

use ndarray::Array2;

use crate::io::{ColoredPointCloud, PointCloud};
use crate::{Error, Result};

pub use emd::{emd_exact, emd_exact_with_cap, Assignment, DEFAULT_EMD_CAP};
pub use kdtree::KdTree;

/// Point count above which nearest-neighbor queries use the spatial index.
pub const EXHAUSTIVE_LIMIT: usize = 256;

fn rows(m: &Array2<f64>) -> Vec<[f64; 3]> {
    m.rows()
        .into_iter()
        .map(|r| [r[0], r[1], r[2]])
        .collect()
}

/// For each row of `from`, the `(index, squared distance)` of its nearest
/// row in `to`. Ties break toward the lowest index.
fn nearest_in(from: &[[f64; 3]], to: &[[f64; 3]]) -> Vec<(usize, f64)> {
    if to.len() > EXHAUSTIVE_LIMIT {
        let tree = KdTree::build(to.to_vec());
        from.iter().map(|&q| tree.nearest(q)).collect()
    } else {
        from.iter()
            .map(|&q| {
                let mut best = (usize::MAX, f64::INFINITY);
                for (j, &p) in to.iter().enumerate() {
                    let dx = q[0] - p[0];
                    let dy = q[1] - p[1];
                    let dz = q[2] - p[2];
                    let d = dx * dx + dy * dy + dz * dz;
                    if d < best.1 {
                        best = (j, d);
                    }
                }
                best
            })
            .collect()
    }
}

/// Chamfer distance between two 3D point sets:
/// `sum_{x in a} min_y ||x-y||^2 + sum_{y in b} min_x ||x-y||^2`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    chamfer_positions(a.positions(), b.positions())
}

/// Chamfer on raw `N x 3` matrices.
pub fn chamfer_positions(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let ra = rows(a);
    let rb = rows(b);
    let fwd: f64 = nearest_in(&ra, &rb).iter().map(|&(_, d)| d).sum();
    let bwd: f64 = nearest_in(&rb, &ra).iter().map(|&(_, d)| d).sum();
    fwd + bwd
}

/// Chamfer divided by the total point count, the per-point figure used in
/// evaluation reports.
pub fn chamfer_normalized(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    chamfer_positions(a, b) / (a.nrows() + b.nrows()) as f64
}

/// Chamfer in arbitrary dimension (exhaustive); used by the single-stage
/// baseline, which matches position/color rows in R^6.
pub fn chamfer_general(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    let (value, _) = chamfer_general_with_grad(a, b)?;
    Ok(value)
}

/// Chamfer in arbitrary dimension plus its gradient with respect to `a`
/// (nearest-neighbor indices treated as constant).
pub fn chamfer_general_with_grad(
    a: &Array2<f64>,
    b: &Array2<f64>,
) -> Result<(f64, Array2<f64>)> {
    if a.ncols() != b.ncols() {
        return Err(Error::ShapeMismatch {
            context: "chamfer",
            expected: format!("N x {}", a.ncols()),
            actual: format!("{} x {}", b.nrows(), b.ncols()),
        });
    }
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::EmptyCloud);
    }
    let d = a.ncols();
    let dist2 = |i: usize, j: usize| -> f64 {
        (0..d)
            .map(|c| {
                let diff = a[[i, c]] - b[[j, c]];
                diff * diff
            })
            .sum()
    };
    let use_tree = d == 3 && b.nrows().max(a.nrows()) > EXHAUSTIVE_LIMIT;
    let (fwd_nn, bwd_nn) = if use_tree {
        let ra = rows(a);
        let rb = rows(b);
        (nearest_in(&ra, &rb), nearest_in(&rb, &ra))
    } else {
        let fwd = (0..a.nrows())
            .map(|i| {
                (0..b.nrows())
                    .map(|j| (j, dist2(i, j)))
                    .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
                    .unwrap()
            })
            .collect();
        let bwd = (0..b.nrows())
            .map(|j| {
                (0..a.nrows())
                    .map(|i| (i, dist2(i, j)))
                    .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
                    .unwrap()
            })
            .collect();
        (fwd, bwd)
    };
    let value: f64 = fwd_nn.iter().map(|&(_, d)| d).sum::<f64>()
        + bwd_nn.iter().map(|&(_, d)| d).sum::<f64>();
    let mut grad = Array2::zeros(a.dim());
    for (i, &(j, _)) in fwd_nn.iter().enumerate() {
        for c in 0..d {
            grad[[i, c]] += 2.0 * (a[[i, c]] - b[[j, c]]);
        }
    }
    for (j, &(i, _)) in bwd_nn.iter().enumerate() {
        for c in 0..d {
            grad[[i, c]] += 2.0 * (a[[i, c]] - b[[j, c]]);
        }
    }
    Ok((value, grad))
}

/// Mean squared error over all `3N` color channels.
pub fn color_mse(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            context: "color_mse",
            expected: format!("{} x {}", a.nrows(), a.ncols()),
            actual: format!("{} x {}", b.nrows(), b.ncols()),
        });
    }
    let n = (a.nrows() * a.ncols()) as f64;
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// [`color_mse`] plus its gradient with respect to `a`.
pub fn color_mse_with_grad(a: &Array2<f64>, b: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    let value = color_mse(a, b)?;
    let n = (a.nrows() * a.ncols()) as f64;
    let grad = (a - b) * (2.0 / n);
    Ok((value, grad))
}

/// Symmetric color error between two colored clouds with no shared point
/// order: each cloud's colors are compared against the `k`-NN-aligned colors
/// of the other (both directions averaged), in unit sRGB. Multiply by 255^2
/// for the 0-255 scale.
pub fn color_mse_aligned(
    recon: &ColoredPointCloud,
    original: &ColoredPointCloud,
    k: usize,
) -> Result<f64> {
    let recon = recon.to_space(crate::color::ColorSpaceTag::RgbUnit);
    let original = original.to_space(crate::color::ColorSpaceTag::RgbUnit);
    let fwd_targets = knn_align_positions(recon.positions(), &original, k)?;
    let bwd_targets = knn_align_positions(original.positions(), &recon, k)?;
    let fwd = color_mse(recon.colors(), &fwd_targets)?;
    let bwd = color_mse(original.colors(), &bwd_targets)?;
    Ok(0.5 * (fwd + bwd))
}

/// For each reconstructed point, the mean color of its `k` nearest original
/// points (positions only). Distance ties break toward the lowest original
/// index.
pub fn knn_align(
    recon: &PointCloud,
    original: &ColoredPointCloud,
    k: usize,
) -> Result<Array2<f64>> {
    knn_align_positions(recon.positions(), original, k)
}

/// [`knn_align`] on a raw position matrix.
pub fn knn_align_positions(
    recon: &Array2<f64>,
    original: &ColoredPointCloud,
    k: usize,
) -> Result<Array2<f64>> {
    if k == 0 || k > original.len() {
        return Err(Error::InvalidConfig {
            key: "k".into(),
            message: format!("k must be in 1..={}, got {k}", original.len()),
        });
    }
    let queries = rows(recon);
    let targets = rows(original.positions());
    let colors = original.colors();
    let mut out = Array2::zeros((queries.len(), 3));
    let tree = (targets.len() > EXHAUSTIVE_LIMIT).then(|| KdTree::build(targets.clone()));
    for (i, &q) in queries.iter().enumerate() {
        let neighbors: Vec<(usize, f64)> = match &tree {
            Some(t) => t.k_nearest(q, k),
            None => {
                let mut all: Vec<(f64, usize)> = targets
                    .iter()
                    .enumerate()
                    .map(|(j, p)| {
                        let dx = q[0] - p[0];
                        let dy = q[1] - p[1];
                        let dz = q[2] - p[2];
                        (dx * dx + dy * dy + dz * dz, j)
                    })
                    .collect();
                all.sort_by(|a, b| a.partial_cmp(b).unwrap());
                all.into_iter().take(k).map(|(d, j)| (j, d)).collect()
            }
        };
        for c in 0..3 {
            out[[i, c]] =
                neighbors.iter().map(|&(j, _)| colors[[j, c]]).sum::<f64>() / k as f64;
        }
    }
    Ok(out)
}
