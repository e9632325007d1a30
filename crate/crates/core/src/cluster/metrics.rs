//! Internal validity indices and the adjusted Rand index.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{sq_dist, ClusterError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterScores {
    pub sc: f64,
    pub dbi: f64,
    pub chi: f64,
}

/// Cluster count after checking that every id below it is used, that there
/// are at least two clusters and fewer clusters than points.
fn cluster_count(n: usize, labels: &[usize]) -> Result<usize, ClusterError> {
    if labels.len() != n {
        return Err(ClusterError::UndefinedScore(format!("{} labels for {n} points", labels.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut used = vec![false; k];
    labels.iter().for_each(|&l| used[l] = true);
    if let Some(empty) = used.iter().position(|u| !u) {
        return Err(ClusterError::UndefinedScore(format!("cluster {empty} is empty")));
    }
    if k < 2 {
        return Err(ClusterError::UndefinedScore("fewer than two clusters".into()));
    }
    if k >= n {
        return Err(ClusterError::UndefinedScore(format!("{k} clusters for {n} points")));
    }
    Ok(k)
}

fn centroids(data: ArrayView2<f64>, labels: &[usize], k: usize) -> (Array2<f64>, Vec<usize>) {
    let mut c = Array2::zeros((k, data.ncols()));
    let mut counts = vec![0usize; k];
    for (x, &l) in data.rows().into_iter().zip(labels) {
        let mut row = c.row_mut(l);
        row += &x;
        counts[l] += 1;
    }
    for (mut row, &m) in c.rows_mut().into_iter().zip(&counts) {
        row /= m as f64;
    }
    (c, counts)
}

/// Mean silhouette width with Euclidean distances. Points in singleton
/// clusters score 0.
pub fn silhouette(data: ArrayView2<f64>, labels: &[usize]) -> Result<f64, ClusterError> {
    let n = data.nrows();
    let k = cluster_count(n, labels)?;
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += sq_dist(data.row(i), data.row(j)).sqrt();
            }
        }
        let own = labels[i];
        if counts[own] == 1 {
            continue;
        }
        let a = sums[own] / (counts[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Davies-Bouldin index. A pair of coincident centroids contributes no
/// ratio, following the common library convention.
pub fn davies_bouldin(data: ArrayView2<f64>, labels: &[usize]) -> Result<f64, ClusterError> {
    let k = cluster_count(data.nrows(), labels)?;
    let (c, counts) = centroids(data, labels, k);
    let mut scatter = vec![0.0; k];
    for (x, &l) in data.rows().into_iter().zip(labels) {
        scatter[l] += sq_dist(x, c.row(l)).sqrt();
    }
    for (s, &m) in scatter.iter_mut().zip(&counts) {
        *s /= m as f64;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = sq_dist(c.row(i), c.row(j)).sqrt();
            if d > 0.0 {
                worst = worst.max((scatter[i] + scatter[j]) / d);
            }
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// Calinski-Harabasz variance ratio. Zero within-cluster dispersion yields
/// 1.0, following the common library convention.
pub fn calinski_harabasz(data: ArrayView2<f64>, labels: &[usize]) -> Result<f64, ClusterError> {
    let n = data.nrows();
    let k = cluster_count(n, labels)?;
    let (c, counts) = centroids(data, labels, k);
    let mean = data.mean_axis(Axis(0)).expect("n > k ≥ 2");
    let between: f64 = (0..k).map(|i| counts[i] as f64 * sq_dist(c.row(i), mean.view())).sum();
    let within: f64 = data
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(x, &l)| sq_dist(x, c.row(l)))
        .sum();
    if within == 0.0 {
        return Ok(1.0);
    }
    Ok(between * (n - k) as f64 / (within * (k - 1) as f64))
}

pub fn score_partition(data: ArrayView2<f64>, labels: &[usize]) -> Result<ClusterScores, ClusterError> {
    Ok(ClusterScores {
        sc: silhouette(data, labels)?,
        dbi: davies_bouldin(data, labels)?,
        chi: calinski_harabasz(data, labels)?,
    })
}

fn comb2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Chance-corrected agreement between two labelings of the same items.
/// Identical trivial partitions (all one cluster or all singletons) score 1.
pub fn adjusted_rand_index<A: Ord, B: Ord>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    use std::collections::BTreeMap;
    let mut table: BTreeMap<(&A, &B), u64> = BTreeMap::new();
    let mut rows: BTreeMap<&A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<&B, u64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let n = a.len() as u64;
    let index: f64 = table.values().map(|&v| comb2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| comb2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| comb2(v)).sum();
    let total = comb2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
