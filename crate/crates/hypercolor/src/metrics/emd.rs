//! Exact Earth Mover's Distance between equal-size point sets.
//!
//! The cost of pairing `x` with `y` is `0.5 * ||x - y||^2`; the minimum-cost
//! bijection is found with the Hungarian algorithm (Jonker-Volgenant style
//! with row/column potentials, O(n^3)).

use crate::io::PointCloud;
use crate::{Error, Result};

/// Default cap on the exact solver's problem size.
pub const DEFAULT_EMD_CAP: usize = 2048;

/// A minimum-cost bijection between two equal-size point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `mapping[i] = j` pairs point `i` of the first set with point `j` of
    /// the second.
    pub mapping: Vec<usize>,
    /// Total pairing cost under `0.5 * ||x - y||^2`.
    pub cost: f64,
}

pub(super) fn pair_cost(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    0.5 * (dx * dx + dy * dy + dz * dz)
}

/// Exact EMD with the default solver cap.
pub fn emd_exact(a: &PointCloud, b: &PointCloud) -> Result<Assignment> {
    emd_exact_with_cap(a, b, DEFAULT_EMD_CAP)
}

/// Exact EMD; rejects inputs larger than `cap` with guidance to subsample.
pub fn emd_exact_with_cap(a: &PointCloud, b: &PointCloud, cap: usize) -> Result<Assignment> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::SizeMismatch {
            left: n,
            right: b.len(),
        });
    }
    if n > cap {
        return Err(Error::CapExceeded { size: n, cap });
    }
    let cost = |i: usize, j: usize| pair_cost(a.point(i), b.point(j));
    let mapping = hungarian(n, &cost);
    let total = (0..n).map(|i| cost(i, mapping[i])).sum();
    Ok(Assignment {
        mapping,
        cost: total,
    })
}

/// Hungarian algorithm with potentials; 1-based internal indexing.
fn hungarian(n: usize, cost: &dyn Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut mapping = vec![0usize; n];
    for j in 1..=n {
        mapping[p[j] - 1] = j - 1;
    }
    mapping
}
