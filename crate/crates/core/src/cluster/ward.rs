use ndarray::ArrayView2;

use super::{check_k, require_k, sq_dist, ClusterAlgorithm, ClusterAssignment, ClusterError};

/// Ward agglomeration cut at `k` clusters. Optional `weights` treat each row
/// as that many coincident points (used for BIRCH subcluster centroids).
///
/// Merge costs are kept as twice the Ward increase in squared error and
/// updated with the Lance-Williams recurrence. Equal costs merge the pair
/// with the smallest indices first.
pub fn ward_linkage(data: ArrayView2<f64>, weights: Option<&[f64]>, k: usize) -> Result<Vec<usize>, ClusterError> {
    let n = data.nrows();
    check_k(n, k)?;
    let mut w: Vec<f64> = weights.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
    if w.len() != n || w.iter().any(|v| !(*v > 0.0)) {
        return Err(ClusterError::InvalidConfig("weights must be positive, one per row".into()));
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = 2.0 * w[i] * w[j] / (w[i] + w[j]) * sq_dist(data.row(i), data.row(j));
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut active: Vec<bool> = vec![true; n];
    let mut parent: Vec<usize> = (0..n).collect();
    for _ in 0..n - k {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && d[i * n + j] < best.2 {
                    best = (i, j, d[i * n + j]);
                }
            }
        }
        let (i, j, dij) = best;
        for m in 0..n {
            if !active[m] || m == i || m == j {
                continue;
            }
            let v = ((w[i] + w[m]) * d[i * n + m] + (w[j] + w[m]) * d[j * n + m] - w[m] * dij) / (w[i] + w[j] + w[m]);
            d[i * n + m] = v;
            d[m * n + i] = v;
        }
        w[i] += w[j];
        active[j] = false;
        parent[j] = i;
    }
    let root = |mut x: usize| {
        while parent[x] != x {
            x = parent[x];
        }
        x
    };
    Ok((0..n).map(root).collect())
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Agglomerative;

impl ClusterAlgorithm for Agglomerative {
    fn name(&self) -> &'static str {
        "agglomerative"
    }

    fn needs_k(&self) -> bool {
        true
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "linkage": "ward" })
    }

    fn fit(&self, data: ArrayView2<f64>, k: Option<usize>, seed: u64) -> Result<ClusterAssignment, ClusterError> {
        let k = require_k(self, k)?;
        let raw = ward_linkage(data, None, k)?;
        Ok(ClusterAssignment::new(self.name(), &raw, self.params(), seed))
    }
}
